"""Generate fuzz documents with verdicts from the backend validator, so the
TypeScript client validation can be checked for parity offline."""
import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "src"))

from dualclock.motion import SpecValidationError
from dualclock.serialize import mask_to_rle, motion_document_from_json


def random_document(rng, force_valid=False):
    h = w = 16
    F = int(rng.integers(2, 9))
    mask = rng.random((h, w)) < rng.uniform(0.0 if not force_valid else 0.2, 0.4)
    if force_valid and not mask.any():
        mask[4, 4] = True
    n_kf = int(rng.integers(1, 5))
    frames = sorted(rng.choice(range(F), size=min(n_kf, F), replace=False).tolist())
    if force_valid:
        frames = sorted(set([0] + frames + [F - 1]))
    keyframes = []
    for i, f in enumerate(frames):
        kf = {"frame": int(f)}
        if not (force_valid and i == 0):
            kf.update({
                "dx": float(rng.normal(0, 3)) if rng.random() < 0.7 else 0.0,
                "dy": float(rng.normal(0, 3)) if rng.random() < 0.7 else 0.0,
                "rotation": float(rng.normal(0, 0.5)) if rng.random() < 0.3 else 0.0,
                "log_scale": float(rng.normal(0, 0.4)) if rng.random() < 0.3 else 0.0,
            })
        keyframes.append(kf)
    if not force_valid and rng.random() < 0.3 and len(keyframes) > 1:
        keyframes = keyframes[::-1]  # break monotonicity
    if not force_valid and rng.random() < 0.2:
        keyframes[-1]["log_scale"] = 10.0  # out-of-range scale
    return {
        "version": 1,
        "image": "img",
        "frame_count": F,
        "regions": [{"mask": mask_to_rle(mask), "keyframes": keyframes}],
    }


def backend_verdict(doc):
    try:
        motion_document_from_json(json.dumps(doc))
        # the first-keyframe identity rule is enforced at warp time; mirror it
        # here because the client checks it too
        k0 = doc["regions"][0]["keyframes"][0]
        identity = all(abs(k0.get(k, 0.0)) == 0.0 for k in ("dx", "dy", "rotation", "log_scale"))
        return identity
    except SpecValidationError:
        return False


def main():
    rng = np.random.default_rng(20240817)
    cases = []
    while len(cases) < 24:
        force_valid = len(cases) % 3 == 0
        doc = random_document(rng, force_valid=force_valid)
        cases.append({"document": doc, "valid": backend_verdict(doc)})
    out = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "validation_cases.json"
    out.write_text(json.dumps(cases, indent=1))
    valid = sum(c["valid"] for c in cases)
    print(f"wrote {len(cases)} cases ({valid} valid, {len(cases) - valid} invalid) to {out}")


if __name__ == "__main__":
    main()
