"""Checkpointing: a resumed run continues bit-for-bit where it stopped.

The envelope is JSON with base64 float payloads (bit-exact round trip), a
hash of the producing config, and a checksum over the body so tampering or
truncation is detected before any state is trusted.
"""

from __future__ import annotations

import base64
import hashlib
import json
from pathlib import Path
from typing import Optional

import numpy as np

from ..search_space import genotype_from_dict, genotype_to_dict
from ..slow_fast import BestRecord, Individual, Population, RunState
from ..weight_store import weight_set_from_dict, weight_set_to_dict

FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


class HashMismatch(CheckpointError):
    pass


class CorruptCheckpoint(CheckpointError):
    pass


def _encode_vector(values: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(values, dtype="<f8").tobytes()).decode("ascii")


def _decode_vector(text: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(text), dtype="<f8").copy()


def _body(state: RunState, config_hash: str) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "config_hash": config_hash,
        "generation": state.generation,
        "population": {
            "generation": state.population.generation,
            "individuals": [
                {
                    "id": ind.id,
                    "alpha": _encode_vector(ind.alpha),
                    "delta_prev": _encode_vector(ind.delta_prev),
                    "last_loss": ind.last_loss,
                    "last_update_generation": ind.last_update_generation,
                }
                for ind in state.population.individuals
            ],
        },
        "omega": weight_set_to_dict(state.omega),
        "pair_rng_state": state.pair_rng_state,
        "lambda_rng_state": state.lambda_rng_state,
        "best": None
        if state.best is None
        else {
            "genotype": genotype_to_dict(state.best.genotype),
            "loss": state.best.loss,
            "generation": state.best.generation,
            "individual_id": state.best.individual_id,
        },
    }


def _checksum(body: dict) -> str:
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def save_checkpoint(path: Path, state: RunState, config_hash: str) -> None:
    body = _body(state, config_hash)
    envelope = dict(body, checksum=_checksum(body))
    Path(path).write_text(json.dumps(envelope, sort_keys=True), encoding="utf-8")


def load_checkpoint(path: Path, config_hash: str) -> RunState:
    try:
        envelope = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(envelope, dict) or "checksum" not in envelope:
        raise CorruptCheckpoint(f"checkpoint {path} has no checksum")
    claimed = envelope.pop("checksum")
    if _checksum(envelope) != claimed:
        raise CorruptCheckpoint(f"checkpoint {path} failed its checksum")
    if envelope.get("format_version") != FORMAT_VERSION:
        raise CorruptCheckpoint(f"unsupported checkpoint format {envelope.get('format_version')}")
    if envelope["config_hash"] != config_hash:
        raise HashMismatch(
            "checkpoint was produced under a different configuration "
            f"({envelope['config_hash'][:12]}... vs {config_hash[:12]}...)"
        )
    individuals = tuple(
        Individual(
            alpha=_decode_vector(ind["alpha"]),
            delta_prev=_decode_vector(ind["delta_prev"]),
            last_loss=ind["last_loss"],
            id=ind["id"],
            last_update_generation=ind["last_update_generation"],
        )
        for ind in envelope["population"]["individuals"]
    )
    best = None
    if envelope["best"] is not None:
        best = BestRecord(
            genotype=genotype_from_dict(envelope["best"]["genotype"]),
            loss=envelope["best"]["loss"],
            generation=envelope["best"]["generation"],
            individual_id=envelope["best"]["individual_id"],
        )
    return RunState(
        generation=envelope["generation"],
        population=Population(
            individuals=individuals, generation=envelope["population"]["generation"]
        ),
        omega=weight_set_from_dict(envelope["omega"]),
        pair_rng_state=envelope["pair_rng_state"],
        lambda_rng_state=envelope["lambda_rng_state"],
        best=best,
    )


def checkpoint_name(generation: int) -> str:
    return f"checkpoint_g{generation:04d}.ckpt"
