"""Builds tiny local transformer models so the suite needs no network."""

import pytest
import torch
from tokenizers import Tokenizer, decoders
from tokenizers.models import WordLevel
from tokenizers.pre_tokenizers import Whitespace
from transformers import (
    BertConfig,
    BertForSequenceClassification,
    GPT2Config,
    GPT2LMHeadModel,
    PreTrainedTokenizerFast,
)

WORDS = [
    "the", "cat", "sat", "on", "mat", "dog", "ran", "up", "tree",
    "storm", "closed", "every", "road", "roads", "into", "town",
    "were", "weather", "was", "sunny", "overnight", ".", ",",
    "generate", "a", "short", "long", "abstractive", "extractive",
    "summary", "paraphrase", "of", "given", "sentence", ":",
]


def _fast_tokenizer():
    vocab = {"<pad>": 0, "<unk>": 1, "<eos>": 2}
    for word in WORDS:
        vocab[word] = len(vocab)
    tok = Tokenizer(WordLevel(vocab, unk_token="<unk>"))
    tok.pre_tokenizer = Whitespace()
    tok.decoder = decoders.WordPiece(prefix="##", cleanup=False)
    return PreTrainedTokenizerFast(
        tokenizer_object=tok,
        pad_token="<pad>",
        unk_token="<unk>",
        eos_token="<eos>",
        bos_token="<eos>",
    ), len(vocab)


@pytest.fixture(scope="session")
def model_dirs(tmp_path_factory):
    base = tmp_path_factory.mktemp("tiny-models")
    tokenizer, vocab_size = _fast_tokenizer()
    torch.manual_seed(1234)

    gen_dir = base / "generator"
    tokenizer.save_pretrained(gen_dir)
    gpt_config = GPT2Config(
        vocab_size=vocab_size,
        n_positions=128,
        n_embd=32,
        n_layer=2,
        n_head=2,
        bos_token_id=2,
        eos_token_id=2,
        pad_token_id=0,
    )
    GPT2LMHeadModel(gpt_config).save_pretrained(gen_dir)

    nli_dir = base / "nli"
    tokenizer.save_pretrained(nli_dir)
    bert_config = BertConfig(
        vocab_size=vocab_size,
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=128,
        num_labels=3,
        id2label={0: "entailment", 1: "neutral", 2: "contradiction"},
        label2id={"entailment": 0, "neutral": 1, "contradiction": 2},
        pad_token_id=0,
    )
    BertForSequenceClassification(bert_config).save_pretrained(nli_dir)

    task_dir = base / "task"
    tokenizer.save_pretrained(task_dir)
    GPT2LMHeadModel(gpt_config).save_pretrained(task_dir)

    return {"generator": str(gen_dir), "nli": str(nli_dir), "task": str(task_dir)}


@pytest.fixture(scope="session")
def client(model_dirs):
    from fastapi.testclient import TestClient

    from modelshim.app import create_app
    from modelshim.config import ShimConfig

    config = ShimConfig(
        generator_model=model_dirs["generator"],
        nli_model=model_dirs["nli"],
        task_model=model_dirs["task"],
        device="cpu",
        max_batch_size=4,
        top_k=10,
    )
    return TestClient(create_app(config))
