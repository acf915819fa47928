"""Transformer-backed model wrappers behind the wire protocol.

Forward passes are serialized per backend with a lock (single device), and
batched NLI scoring chunks inputs by max_batch_size while preserving order.
"""

from __future__ import annotations

import logging
import threading

import torch
from transformers import (
    AutoConfig,
    AutoModelForCausalLM,
    AutoModelForSeq2SeqLM,
    AutoModelForSequenceClassification,
    AutoTokenizer,
)

logger = logging.getLogger(__name__)


class BackendError(Exception):
    pass


class GeneratorBackend:
    def __init__(self, model_name: str, device: str = "cpu", top_k: int = 200):
        self.name = model_name
        self.top_k = top_k
        self._device = device
        self._lock = threading.Lock()
        self._tokenizer = AutoTokenizer.from_pretrained(model_name)
        self._model = AutoModelForCausalLM.from_pretrained(model_name).to(device).eval()
        if self._tokenizer.pad_token_id is None:
            self._tokenizer.pad_token = self._tokenizer.eos_token

    def _encode_prefix(self, prefix: str) -> torch.Tensor:
        ids = self._tokenizer(prefix, return_tensors="pt").input_ids
        if ids.numel() == 0:
            start = self._tokenizer.bos_token_id
            if start is None:
                start = self._tokenizer.eos_token_id
            ids = torch.tensor([[start]])
        return ids.to(self._device)

    def sample(self, prefix: str, count: int, top_p: float, max_tokens: int, seed: int) -> list[str]:
        with self._lock, torch.no_grad():
            torch.manual_seed(seed)
            ids = self._encode_prefix(prefix)
            output = self._model.generate(
                ids,
                do_sample=True,
                top_p=top_p,
                max_new_tokens=max_tokens,
                num_return_sequences=count,
                pad_token_id=self._tokenizer.pad_token_id,
            )
        prompt_len = ids.shape[1]
        return [
            self._tokenizer.decode(row[prompt_len:], skip_special_tokens=True).strip()
            for row in output
        ]

    def distribution(self, prefix: str) -> list[tuple[str, float]]:
        with self._lock, torch.no_grad():
            ids = self._encode_prefix(prefix)
            logits = self._model(ids).logits[0, -1]
            probs = torch.softmax(logits, dim=-1)
            k = min(self.top_k, probs.shape[-1])
            top = torch.topk(probs, k)
        tokens = self._tokenizer.convert_ids_to_tokens(top.indices.tolist())
        return [(tok, float(p)) for tok, p in zip(tokens, top.values.tolist())]


class NliBackend:
    def __init__(self, model_name: str, device: str = "cpu", max_batch_size: int = 16):
        self.name = model_name
        self._device = device
        self._batch = max_batch_size
        self._lock = threading.Lock()
        self._tokenizer = AutoTokenizer.from_pretrained(model_name)
        self._model = (
            AutoModelForSequenceClassification.from_pretrained(model_name).to(device).eval()
        )
        self._entail_index = self._find_entail_index()

    def _find_entail_index(self) -> int:
        for index, label in self._model.config.id2label.items():
            if "entail" in str(label).lower():
                return int(index)
        logger.warning(
            "%s: no label mentions 'entail'; using class 0 as the entailment class",
            self.name,
        )
        return 0

    def score_pairs(self, pairs: list[tuple[str, str]]) -> list[float]:
        scores: list[float] = []
        for start in range(0, len(pairs), self._batch):
            chunk = pairs[start : start + self._batch]
            premises = [p for p, _ in chunk]
            hypotheses = [h for _, h in chunk]
            with self._lock, torch.no_grad():
                encoded = self._tokenizer(
                    premises,
                    hypotheses,
                    return_tensors="pt",
                    padding=True,
                    truncation=True,
                ).to(self._device)
                logits = self._model(**encoded).logits
                probs = torch.softmax(logits, dim=-1)[:, self._entail_index]
            scores.extend(float(p) for p in probs.tolist())
        return scores


class TaskBackend:
    def __init__(self, model_name: str, device: str = "cpu"):
        self.name = model_name
        self._device = device
        self._lock = threading.Lock()
        self._tokenizer = AutoTokenizer.from_pretrained(model_name)
        config = AutoConfig.from_pretrained(model_name)
        self._seq2seq = bool(getattr(config, "is_encoder_decoder", False))
        loader = AutoModelForSeq2SeqLM if self._seq2seq else AutoModelForCausalLM
        self._model = loader.from_pretrained(model_name).to(device).eval()
        if self._tokenizer.pad_token_id is None and self._tokenizer.eos_token_id is not None:
            self._tokenizer.pad_token = self._tokenizer.eos_token

    def infer(self, text: str, max_tokens: int = 64) -> str:
        with self._lock, torch.no_grad():
            ids = self._tokenizer(text, return_tensors="pt").input_ids.to(self._device)
            if ids.numel() == 0:
                raise BackendError("task model received an empty input")
            output = self._model.generate(
                ids,
                do_sample=False,
                max_new_tokens=max_tokens,
                pad_token_id=self._tokenizer.pad_token_id,
            )[0]
        if not self._seq2seq:
            output = output[ids.shape[1] :]
        return self._tokenizer.decode(output, skip_special_tokens=True).strip()
