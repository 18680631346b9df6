"""
Experiment layer: a flat config, one call that runs a session end to end
(post-processing included when the verdict is proceed), artifact rendering,
replay, and batch execution.
"""
from __future__ import annotations

import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .adversary import ResendRule
from .analysis import Verdict
from .bb84 import bb84_keep_mask, bb84_run, bb84_stats
from .formats import (
    FormatError,
    format_value,
    parse_key_values,
    parse_transcript,
    render_key,
    render_key_values,
    render_transcript,
)
from .postprocess import PostprocessResult, postprocess_keys
from .protocol import NO_VALUE, KeyMaterial, keep_mask
from .session import ConfigError, SessionConfig, SessionStats, run_session, session_stats, streams

PROTOCOLS = ("erasure", "bb84")
ENV_PREFIX = "ERASURE_QKD_"


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str = "erasure"
    rounds: int = 100_000
    attack: str = "none"
    blinding_threshold: float = 0.9
    check_mode: bool = False
    sample_fraction: float = 0.1
    qber_threshold: float = 1 / 3
    info_threshold: float = 0.311
    seed: int = 0
    safety_bits: int = 64
    eve_info_rate: Optional[float] = None
    resend_rule: Optional[str] = None
    out_dir: Optional[str] = None

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if self.safety_bits < 0:
            raise ConfigError("safety_bits must be non-negative")
        if self.eve_info_rate is not None and not 0 <= self.eve_info_rate <= 1:
            raise ConfigError("eve_info_rate must lie in [0, 1]")
        if self.resend_rule is not None and self.protocol != "erasure":
            raise ConfigError("resend_rule only applies to the erasure protocol")
        self.session_config()  # validates the shared fields

    def session_config(self) -> SessionConfig:
        rule = ResendRule.from_file(self.resend_rule) if self.resend_rule else None
        return SessionConfig(
            rounds=self.rounds,
            attack=self.attack,
            check_mode=self.check_mode,
            sample_fraction=self.sample_fraction,
            qber_threshold=self.qber_threshold,
            info_threshold=self.info_threshold,
            blinding_threshold=self.blinding_threshold,
            seed=self.seed,
            resend_rule=rule,
        )

    @classmethod
    def from_strings(cls, values: Mapping[str, str], base: Optional["ExperimentConfig"] = None) -> "ExperimentConfig":
        """Build from text values (config files, env vars, flags), on top of ``base``."""
        known = {f.name: f for f in fields(cls)}
        current = {f: getattr(base, f) for f in known} if base else {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            current[key] = _coerce(key, raw)
        return cls(**current)

    def as_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_INT_FIELDS = {"rounds", "seed", "safety_bits"}
_FLOAT_FIELDS = {"blinding_threshold", "sample_fraction", "qber_threshold", "info_threshold", "eve_info_rate"}
_OPTIONAL = {"eve_info_rate", "resend_rule", "out_dir"}


def _coerce(key: str, raw):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if key in _OPTIONAL and text.lower() in ("", "none"):
        return None
    try:
        if key in _INT_FIELDS:
            return int(text, 0)
        if key in _FLOAT_FIELDS:
            if "/" in text:
                num, den = text.split("/")
                return float(num) / float(den)
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    if key == "check_mode":
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"bad value for check_mode: {raw!r}")
    return text


def env_overrides(environ: Mapping[str, str] = os.environ) -> dict[str, str]:
    names = {f.name for f in fields(ExperimentConfig)}
    out = {}
    for key, value in environ.items():
        if key.startswith(ENV_PREFIX) and key[len(ENV_PREFIX) :].lower() in names:
            out[key[len(ENV_PREFIX) :].lower()] = value
    return out


def load_config(
    path: Optional[str] = None,
    flags: Optional[Mapping[str, str]] = None,
    environ: Mapping[str, str] = os.environ,
) -> ExperimentConfig:
    """defaults < config file < environment < flags."""
    config = ExperimentConfig()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        config = ExperimentConfig.from_strings(parse_key_values(text), config)
    config = ExperimentConfig.from_strings(env_overrides(environ), config)
    return ExperimentConfig.from_strings(dict(flags or {}), config)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    transcript: Any
    keys: KeyMaterial
    stats: SessionStats
    post: Optional[PostprocessResult] = None

    @property
    def verdict(self) -> Verdict:
        return self.stats.verdict

    def summary(self) -> dict[str, Any]:
        return build_summary(self.config, self.stats, self.post, self.keys)

    def artifacts(self) -> dict[str, str]:
        """File name -> text for everything a run writes."""
        out = {
            "transcript.csv": render_transcript(self.transcript, self.config.protocol, _header(self.config)),
            "summary.txt": render_key_values("summary", self.summary()),
        }
        if self.post is not None and not self.post.aborted:
            out["alice.key"] = render_key(self.keys.amplified_alice)
            out["bob.key"] = render_key(self.keys.amplified_bob)
        return out


_HEADER_FIELDS = (
    "protocol", "rounds", "attack", "blinding_threshold", "check_mode", "sample_fraction",
    "qber_threshold", "info_threshold", "seed", "safety_bits", "eve_info_rate", "resend_rule",
)


def _header(config: ExperimentConfig) -> dict[str, Any]:
    return {k: getattr(config, k) for k in _HEADER_FIELDS}


def build_summary(config, stats: SessionStats, post: Optional[PostprocessResult], keys: KeyMaterial) -> dict[str, Any]:
    summary: dict[str, Any] = dict(_header(config))
    summary.update(stats.as_dict())
    if post is None:
        summary.update(postprocess="skipped")
    else:
        rec = post.reconciliation
        identical = (
            not post.aborted and np.array_equal(keys.amplified_alice, keys.amplified_bob)
        )
        summary.update(
            postprocess="aborted" if post.aborted else "done",
            reconciled_length=len(rec.corrected_key),
            parity_bits_leaked=rec.parity_bits_leaked,
            verification_bits_leaked=rec.verification_bits_leaked,
            bisections=rec.rounds_of_bisection,
            reconciliation_success=rec.success,
            final_key_length=post.final_length,
            final_keys_identical=identical,
        )
    return summary


def _finish(config: ExperimentConfig, transcript, keys: KeyMaterial, stats: SessionStats) -> ExperimentResult:
    post = None
    if stats.verdict is Verdict.PROCEED:
        gens = streams(config.seed)
        eve_rate = config.eve_info_rate if config.eve_info_rate is not None else stats.i_alice_eve
        post = postprocess_keys(
            keys,
            qber_estimate=stats.sample_qber,
            eve_info_rate=eve_rate,
            safety=config.safety_bits,
            reconcile_rng=gens["reconcile"],
            amplify_seed=int(gens["amplify"].integers(2**63)),
        )
    return ExperimentResult(config, transcript, keys, stats, post)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    session = config.session_config()
    if config.protocol == "erasure":
        transcript, keys, stats = run_session(session)
    else:
        transcript, keys, stats = bb84_run(session)
    return _finish(config, transcript, keys, stats)


def write_artifacts(result: ExperimentResult, out_dir) -> dict[str, Path]:
    """Write all artifacts or none: files are staged in a temp dir and moved at the end."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    texts = result.artifacts()
    with tempfile.TemporaryDirectory(dir=out, prefix=".staging-") as tmp:
        for name, text in texts.items():
            Path(tmp, name).write_text(text)
        paths = {}
        for name in texts:
            paths[name] = out / name
            os.replace(Path(tmp, name), paths[name])
    return paths


class ReplayMismatch(ValueError):
    """The transcript's own columns, or the summary, disagree with a recomputation."""


def _keys_from_columns(protocol: str, transcript) -> KeyMaterial:
    rounds = np.flatnonzero(transcript.kept)
    sampled = transcript.sampled[rounds]
    return KeyMaterial(
        raw_alice=transcript.alice_bit,
        raw_bob=transcript.bob_bit,
        sifted_alice=transcript.alice_bit[rounds].astype(np.uint8),
        sifted_bob=transcript.bob_bit[rounds].astype(np.uint8),
        sifted_rounds=rounds,
        sample_indices=np.flatnonzero(sampled),
    )


def consistency_violations(protocol: str, transcript) -> list[str]:
    """Round-level invariants a transcript must satisfy on its own."""
    problems = []
    if protocol == "erasure":
        expected = keep_mask(transcript.source, transcript.detector)
        fired = transcript.detector != NO_VALUE
    else:
        expected = bb84_keep_mask(transcript.alice_basis, transcript.bob_basis, transcript.bob_bit)
        fired = transcript.bob_bit != NO_VALUE
    for i in np.flatnonzero(expected != transcript.kept)[:10]:
        problems.append(f"round {i}: kept={int(transcript.kept[i])} contradicts the announcements")
    for i in np.flatnonzero(fired != (transcript.clicks == 1))[:10]:
        problems.append(f"round {i}: clicks={transcript.clicks[i]} contradicts the detector column")
    for i in np.flatnonzero(transcript.sampled & ~transcript.kept)[:10]:
        problems.append(f"round {i}: sampled but not kept")
    return problems


def replay(transcript_text: str, summary_text: Optional[str] = None) -> dict[str, str]:
    """
    Recompute the summary from a transcript alone.

    Raises :class:`ReplayMismatch` on an internally inconsistent transcript
    or when ``summary_text`` is given and differs from the recomputation.
    Returns the recomputed summary as text values.
    """
    protocol, header, transcript = parse_transcript(transcript_text)
    problems = consistency_violations(protocol, transcript)
    if problems:
        raise ReplayMismatch("; ".join(problems))
    config = ExperimentConfig.from_strings({k: v for k, v in header.items() if k in _HEADER_FIELDS})
    session = config.session_config()
    if protocol == "erasure":
        stats = session_stats(transcript, session)
    else:
        stats = bb84_stats(transcript, session)
    result = _finish(config, transcript, _keys_from_columns(protocol, transcript), stats)
    recomputed = {k: format_value(v) for k, v in result.summary().items()}
    if summary_text is not None:
        stored = parse_key_values(summary_text, kind="summary")
        diffs = [
            f"{k}: summary has {stored.get(k)!r}, transcript gives {recomputed.get(k)!r}"
            for k in sorted(set(stored) | set(recomputed))
            if stored.get(k) != recomputed.get(k)
        ]
        if diffs:
            raise ReplayMismatch("summary does not match transcript: " + "; ".join(diffs))
    return recomputed


def _artifacts_for(config: ExperimentConfig) -> dict[str, str]:
    return run_experiment(config).artifacts()


def run_batch(configs: Sequence[ExperimentConfig], max_workers: Optional[int] = None) -> list[dict[str, str]]:
    """
    Rendered artifacts for each config, in order.

    Sessions only depend on their own seed, so ``max_workers=1`` (serial)
    and any parallel fan-out give byte-identical results.
    """
    if max_workers == 1:
        return [_artifacts_for(c) for c in configs]
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_artifacts_for, configs))


__all__ = [
    "ENV_PREFIX",
    "ExperimentConfig",
    "ExperimentResult",
    "FormatError",
    "ReplayMismatch",
    "consistency_violations",
    "load_config",
    "replay",
    "run_batch",
    "run_experiment",
    "write_artifacts",
]
