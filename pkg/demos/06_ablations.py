"""Run the three ablation drivers on a small scene and print their report
tables: positional-embedding modes, memory vs token self-attention, and a
memory-capacity sweep.
"""

import tempfile
from pathlib import Path

from memformer.data import stratified_split, synth_scene
from memformer.harness import (
    TrainConfig,
    ablate_attention,
    ablate_pe,
    sweep_memory,
    write_report_text,
)
from memformer.model import ModelConfig

cube, labels = synth_scene(14, 14, 6, 2, noise_sigma=0.03, seed=4)
manifest = stratified_split(labels, (0.4, 0.15, 0.3), seed=0)

model_cfg = ModelConfig(
    window=4, patch=2, bands=6, embed=8, layers=1, heads=2, ffn=16,
    memory=2, classes=2, dropout=0.0, pe_mode="learnable", attention="memory", seed=0,
)
train_cfg = TrainConfig(epochs=4, batch_size=16, lr=1e-2, seed=0)


def show(rows, title, notes=()):
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "report.txt"
        write_report_text(rows, path, title, notes=notes)
        print(path.read_text())


print("every row in a report shares one split-manifest hash and one config")
print("fingerprint, so trials are comparable by construction\n")

show(ablate_pe(cube, manifest, model_cfg, train_cfg), "positional-embedding ablation")
show(
    ablate_attention(cube, manifest, model_cfg, train_cfg),
    "attention ablation (memory vs token self-attention)",
)
show(
    sweep_memory(cube, manifest, model_cfg, train_cfg, sizes=(1, 5, 10)),
    "memory-capacity sweep",
    notes=(
        "reference: on the Indian Pines benchmark the best reported overall "
        "accuracy, 99.23, occurs at memory size 10 (informational, not asserted)",
    ),
)
