"""Refit the NIQE pristine model shipped in src/mdfloss/data/niqe_pristine.npz.

The pristine set is the natural photographs bundled with scikit-image
(see mdfloss.samples.PRISTINE), each used with its two mirror images and
its half-turn.

    python scripts/fit_niqe_pristine.py [output.npz]
"""

import sys
from pathlib import Path

import numpy as np
import skimage

from mdfloss import samples
from mdfloss.evaluation.niqe import MODEL_FILE, fit_pristine_model, save_pristine_model


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parents[1] / "src" / "mdfloss" / "data" / MODEL_FILE
    images = samples.natural_images(samples.PRISTINE)
    model = fit_pristine_model(images)
    provenance = {
        "images": [f"skimage.data.{n}" for n in samples.PRISTINE],
        "scikit_image": skimage.__version__,
        "numpy": np.__version__,
        "script": "scripts/fit_niqe_pristine.py",
    }
    save_pristine_model(model, out, provenance)
    print(f"wrote {out} from {model['patches']} patches")


if __name__ == "__main__":
    main()
