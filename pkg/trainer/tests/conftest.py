from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

# Synthetic key->value lookup task. Keys repeat across records, so BLEU
# retrieval surfaces same-key demonstrations; queries alone determine outputs.
N_KEYS = 25
INSTRUCTION = "Return the stored value for the requested key."
DOCUMENT = "Each key has one fixed value shaped like v12."


def key_value(i: int) -> tuple[str, str]:
    return f"k{i % N_KEYS:02d}", f"v{(7 * (i % N_KEYS) + 3) % 100:02d}"


def write_task_dataset(path: Path, prefix: str, n: int) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(n):
            key, value = key_value(i)
            fh.write(
                json.dumps(
                    {
                        "id": f"{prefix}{i:03d}",
                        "template": {"instruction": INSTRUCTION, "document": DOCUMENT},
                        "query": f"lookup {key}",
                        "output": value,
                    }
                )
                + "\n"
            )


def run_preprocess(config_path: Path, out_dir: Path) -> None:
    """Drive the preprocessing package through its CLI (the file contract)."""
    subprocess.run(
        [
            sys.executable,
            "-m",
            "promptfold.cli",
            "preprocess",
            str(config_path),
            "--out",
            str(out_dir),
        ],
        check=True,
        capture_output=True,
        text=True,
    )


def make_run(
    root: Path,
    *,
    n_train: int = 200,
    n_test: int = 50,
    total_iterations: int = 1200,
    num_stages: int = 3,
    k_start: int = 3,
) -> Path:
    """Build train/test files and a preprocessing run under ``root``."""
    root.mkdir(parents=True, exist_ok=True)
    write_task_dataset(root / "train.jsonl", "syn", n_train)
    write_task_dataset(root / "test.jsonl", "test", n_test)
    (root / "config.json").write_text(
        json.dumps(
            {
                "dataset": "train.jsonl",
                "seed": 0,
                "schedule": {
                    "pattern": "linear",
                    "total_iterations": total_iterations,
                    "num_stages": num_stages,
                    "tau_final": 0.0,
                    "k_start": k_start,
                },
                "bank": {"fraction": 1.0},
            }
        )
    )
    run_dir = root / "run"
    run_preprocess(root / "config.json", run_dir)
    return run_dir


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory) -> Path:
    """A very small preprocessing run for fast harness tests."""
    root = tmp_path_factory.mktemp("tiny_task")
    return make_run(root, n_train=24, n_test=8, total_iterations=12, num_stages=3)
