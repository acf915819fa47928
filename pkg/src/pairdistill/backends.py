"""Backend assembly: deterministic toy doubles and remote-client wiring.

The toy corpora are branchy on purpose: several word orders of the same
small vocabulary give the parallel sampler scrambled near-paraphrases, and
short/long variants of each theme give the summarization stacks material in
every length band.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

from .errors import InputError
from .lmcore import (
    GeneratorModel,
    IdentityTaskModel,
    OverlapScorer,
    ToyLM,
    TruncateHalfTaskModel,
    build_toy_lm,
)
from .remote import EndpointConfig, GeneratorClient, NliClient, RemoteGeneratorModel, TaskClient
from .textmetrics import tokenize

TOY_CORPORA = {
    # Each theme keeps its long sentence's leading content words inside a
    # compressed variant, so keyword-constrained summaries can undershoot the
    # length bound; scrambled variants of equal token sets feed the
    # paraphrase stack.
    "news": [
        "london , ( cnn ) -- markets rose sharply today . today markets rose sharply ."
        " sharply rose markets today . markets rose sharply today .",
        "london , ( cnn ) -- investors watched global markets closely today while"
        " nervous traders slept . investors watched global markets closely ."
        " markets rose sharply today .",
        "investors watched global markets closely today while nervous traders slept ."
        " investors watched global markets closely . today markets rose sharply .",
        "markets rose sharply today . markets rose . sharply rose markets today ."
        " markets fell sharply today . markets fell .",
    ],
    "reddit": [
        "( r/askreddit ) lazy cats sleep all day long while dogs run outside ."
        " lazy cats sleep dogs run . cats sleep all day long .",
        "lazy cats sleep all day long while dogs run outside . lazy cats sleep dogs run ."
        " all day long cats sleep . long day all cats sleep .",
        "( r/askreddit ) players enjoy board games daily while lazy cats sleep ."
        " players enjoy board games . daily players enjoy board games .",
        "cats sleep all day long . all day long cats sleep . cats sleep ."
        " long day all cats sleep .",
    ],
    "biomedical": [
        "stressed cells divide rapidly under pressure while healthy proteins fold slowly ."
        " stressed cells divide rapidly under pressure . cells divide rapidly .",
        "healthy proteins fold slowly inside living cells . proteins fold slowly ."
        " slowly fold proteins inside cells . inside cells proteins fold slowly .",
        "cells divide rapidly under pressure . under pressure cells divide rapidly ."
        " rapidly cells divide under pressure . cells divide .",
    ],
}
TOY_CORPORA["custom"] = TOY_CORPORA["news"]

TASK_STUBS = ("identity", "truncate-half")


@runtime_checkable
class TaskModel(Protocol):
    """Control-code conditioned inference: the trained student's contract."""

    def infer(self, text: str, control_code: str) -> str: ...


class RemoteTaskModel:
    """TaskModel over the wire; the control code is prepended to the input."""

    def __init__(self, client: TaskClient):
        self._client = client

    def infer(self, text: str, control_code: str) -> str:
        return self._client.infer(f"{control_code} {text}", control_code)


@dataclass
class BackendSet:
    """Everything a pipeline stage may need, toy or remote."""

    name: str
    generators: dict[str, GeneratorModel]
    scorer: object
    task_model: TaskModel | None = None

    def generator_for(self, domain: str) -> GeneratorModel:
        try:
            return self.generators[domain]
        except KeyError:
            raise InputError(f"no generator configured for domain {domain!r}") from None


def toy_generator(domain: str, order: int = 3) -> ToyLM:
    if domain not in TOY_CORPORA:
        raise InputError(f"no toy corpus for domain {domain!r}")
    corpus = [tokenize(line) for line in TOY_CORPORA[domain]]
    return build_toy_lm(corpus, order=order)


def toy_backends(domains, task_stub: str = "truncate-half") -> BackendSet:
    if task_stub not in TASK_STUBS:
        raise InputError(f"unknown task stub {task_stub!r}; expected one of {TASK_STUBS}")
    task = IdentityTaskModel() if task_stub == "identity" else TruncateHalfTaskModel()
    return BackendSet(
        name="toy",
        generators={domain: toy_generator(domain) for domain in domains},
        scorer=OverlapScorer(),
        task_model=task,
    )


def remote_backends(domains, endpoints: dict[str, EndpointConfig]) -> BackendSet:
    if "generator" not in endpoints:
        raise InputError("remote backend needs an [endpoint.generator] section")
    if "nli" not in endpoints:
        raise InputError("remote backend needs an [endpoint.nli] section")
    generator = RemoteGeneratorModel(GeneratorClient(endpoints["generator"]))
    task = None
    if "task" in endpoints:
        task = RemoteTaskModel(TaskClient(endpoints["task"]))
    return BackendSet(
        name="remote",
        generators={domain: generator for domain in domains},
        scorer=NliClient(endpoints["nli"]),
        task_model=task,
    )
