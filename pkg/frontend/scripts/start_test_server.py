"""Desk-scale backend for frontend integration tests.

Trains a tiny system, seeds a workspace, writes a sample fundus PNG for
uploads, then serves until killed. Prints READY once the port is open.
"""

import sys
from pathlib import Path

import numpy as np
import uvicorn
from PIL import Image

from funduslab.config import TrainingConfig
from funduslab.data import make_synthetic
from funduslab.pipeline import train_system
from funduslab.service import Workspace, create_app


def main() -> None:
    port = int(sys.argv[1])
    root = Path(sys.argv[2])
    config = TrainingConfig.desk(
        seed=0, pretext_epochs=2, seg_epochs=2, grading_epochs=3,
        attention_epochs=2, adapt_epochs=2,
    )
    source, _ = make_synthetic(seed=0, n=12, size=64, domain_shift=0.0)
    system = train_system(source, config)
    workspace = Workspace(root, config, system=system)

    sample = source.test[0].image.pixels
    arr = np.clip(np.rint(sample * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(root / "sample.png")

    print("READY", flush=True)
    uvicorn.run(create_app(workspace), host="127.0.0.1", port=port, log_level="warning")


if __name__ == "__main__":
    main()
