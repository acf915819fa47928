"""Engine configuration and its INI-style file format.

The file mirrors the generation, filter, endpoint, and run settings; parsing
then serializing then parsing again is a fixed point, which keeps configs
safe to rewrite mechanically.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .decoding import GenerationConfig
from .errors import InputError
from .filters import PARAPHRASE, SUMMARIZATION, FilterConfig
from .pairgen import DOMAINS
from .remote import EndpointConfig

ENDPOINT_ROLES = ("generator", "nli", "task")


@dataclass(frozen=True)
class EngineConfig:
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    summarization: FilterConfig = field(default_factory=lambda: FilterConfig(mode=SUMMARIZATION))
    paraphrase: FilterConfig = field(default_factory=lambda: FilterConfig(mode=PARAPHRASE))
    endpoints: dict[str, EndpointConfig] = field(default_factory=dict)
    domains: tuple[str, ...] = ("news", "reddit", "biomedical")
    workers: int = 1
    batch_size: int = 64

    def __post_init__(self) -> None:
        if self.summarization.mode != SUMMARIZATION or self.paraphrase.mode != PARAPHRASE:
            raise InputError("filter configs are bound to their task modes")
        for domain in self.domains:
            if domain not in DOMAINS:
                raise InputError(f"unknown domain {domain!r}")
        for role in self.endpoints:
            if role not in ENDPOINT_ROLES:
                raise InputError(f"unknown endpoint role {role!r}")
        if self.workers < 1 or self.batch_size < 1:
            raise InputError("workers and batch_size must be >= 1")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    return str(value)


def serialize_config(config: EngineConfig) -> str:
    """Canonical text form: fixed section and key order."""
    out = io.StringIO()
    gen = config.generation
    out.write("[generation]\n")
    out.write(f"k1 = {gen.k1}\n")
    out.write(f"k2 = {gen.k2}\n")
    out.write(f"top_p = {_format_value(gen.top_p)}\n")
    out.write(f"beam_width = {gen.beam_width}\n")
    out.write(f"max_keywords = {gen.max_keywords}\n")
    out.write(f"context_sentences_min = {gen.context_sentences[0]}\n")
    out.write(f"context_sentences_max = {gen.context_sentences[1]}\n")
    out.write(f"max_tokens = {gen.max_tokens}\n")
    out.write(f"seed = {gen.seed}\n")
    out.write("\n[filter.summarization]\n")
    out.write(f"tau_entail = {_format_value(config.summarization.tau_entail)}\n")
    out.write(f"tau_comp_ratio = {_format_value(config.summarization.tau_comp_ratio)}\n")
    out.write("\n[filter.paraphrase]\n")
    out.write(f"tau_entail = {_format_value(config.paraphrase.tau_entail)}\n")
    out.write(f"tau_comp_lo = {_format_value(config.paraphrase.tau_comp_lo)}\n")
    out.write(f"tau_comp_hi = {_format_value(config.paraphrase.tau_comp_hi)}\n")
    out.write(f"tau_abstract = {_format_value(config.paraphrase.tau_abstract)}\n")
    out.write("\n[run]\n")
    out.write(f"domains = {','.join(config.domains)}\n")
    out.write(f"workers = {config.workers}\n")
    out.write(f"batch_size = {config.batch_size}\n")
    for role in ENDPOINT_ROLES:
        endpoint = config.endpoints.get(role)
        if endpoint is None:
            continue
        out.write(f"\n[endpoint.{role}]\n")
        out.write(f"base_url = {endpoint.base_url}\n")
        out.write(f"timeout_ms = {endpoint.timeout_ms}\n")
        out.write(f"max_retries = {endpoint.max_retries}\n")
        out.write(f"max_inflight = {endpoint.max_inflight}\n")
        out.write(f"auth_token = {_format_value(endpoint.auth_token)}\n")
    return out.getvalue()


def parse_config(text: str) -> EngineConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise InputError(f"bad config file: {exc}") from exc

    def get(section: str, key: str, cast, default):
        if not parser.has_option(section, key):
            return default
        raw = parser.get(section, key).strip()
        if raw == "":
            return None if default is None else default
        try:
            return cast(raw)
        except ValueError as exc:
            raise InputError(f"bad value for {section}.{key}: {raw!r}") from exc

    gen_defaults = GenerationConfig()
    generation = GenerationConfig(
        k1=get("generation", "k1", int, gen_defaults.k1),
        k2=get("generation", "k2", int, gen_defaults.k2),
        top_p=get("generation", "top_p", float, gen_defaults.top_p),
        beam_width=get("generation", "beam_width", int, gen_defaults.beam_width),
        max_keywords=get("generation", "max_keywords", int, gen_defaults.max_keywords),
        context_sentences=(
            get("generation", "context_sentences_min", int, gen_defaults.context_sentences[0]),
            get("generation", "context_sentences_max", int, gen_defaults.context_sentences[1]),
        ),
        max_tokens=get("generation", "max_tokens", int, gen_defaults.max_tokens),
        seed=get("generation", "seed", int, gen_defaults.seed),
    )
    summ_defaults = FilterConfig(mode=SUMMARIZATION)
    summarization = FilterConfig(
        mode=SUMMARIZATION,
        tau_entail=get("filter.summarization", "tau_entail", float, summ_defaults.tau_entail),
        tau_comp_ratio=get(
            "filter.summarization", "tau_comp_ratio", float, summ_defaults.tau_comp_ratio
        ),
    )
    para_defaults = FilterConfig(mode=PARAPHRASE)
    paraphrase = FilterConfig(
        mode=PARAPHRASE,
        tau_entail=get("filter.paraphrase", "tau_entail", float, para_defaults.tau_entail),
        tau_comp_lo=get("filter.paraphrase", "tau_comp_lo", float, para_defaults.tau_comp_lo),
        tau_comp_hi=get("filter.paraphrase", "tau_comp_hi", float, para_defaults.tau_comp_hi),
        tau_abstract=get("filter.paraphrase", "tau_abstract", float, para_defaults.tau_abstract),
    )
    domains_raw = get("run", "domains", str, ",".join(("news", "reddit", "biomedical")))
    domains = tuple(d.strip() for d in domains_raw.split(",") if d.strip())
    endpoints: dict[str, EndpointConfig] = {}
    for role in ENDPOINT_ROLES:
        section = f"endpoint.{role}"
        if not parser.has_section(section):
            continue
        base_url = get(section, "base_url", str, None)
        if base_url is None:
            raise InputError(f"{section} needs a base_url")
        endpoints[role] = EndpointConfig(
            base_url=base_url,
            timeout_ms=get(section, "timeout_ms", int, 30000),
            max_retries=get(section, "max_retries", int, 3),
            max_inflight=get(section, "max_inflight", int, 8),
            auth_token=get(section, "auth_token", str, None),
        )
    return EngineConfig(
        generation=generation,
        summarization=summarization,
        paraphrase=paraphrase,
        endpoints=endpoints,
        domains=domains,
        workers=get("run", "workers", int, 1),
        batch_size=get("run", "batch_size", int, 64),
    )


def load_config(path: str | Path) -> EngineConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def save_config(config: EngineConfig, path: str | Path) -> None:
    Path(path).write_text(serialize_config(config), encoding="utf-8")


def with_overrides(config: EngineConfig, *, seed: int | None = None, **gen_overrides) -> EngineConfig:
    """Copy config with generation-level overrides (CLI flags)."""
    gen_kwargs = {}
    if seed is not None:
        gen_kwargs["seed"] = seed
    for key, value in gen_overrides.items():
        if value is None:
            continue
        if key not in {f.name for f in fields(GenerationConfig)}:
            raise InputError(f"unknown generation override {key!r}")
        gen_kwargs[key] = value
    if not gen_kwargs:
        return config
    return replace(config, generation=replace(config.generation, **gen_kwargs))
