import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from spmt.tensor import FeatureMap, LabelMask, OneHotMask
from spmt.labels import NUM_LABELS


def random_feature_map(rng, c, h, w) -> FeatureMap:
    return FeatureMap(rng.uniform(-1.0, 1.0, (c, h, w)).astype(np.float32))


def random_label_mask(rng, h, w, labels=(0, 1, 4, 11)) -> LabelMask:
    return LabelMask(rng.choice(labels, size=(h, w)).astype(np.uint8))


def onehot_from_labels(labels: np.ndarray) -> OneHotMask:
    data = np.zeros((NUM_LABELS, *labels.shape), dtype=np.float32)
    rows, cols = np.indices(labels.shape)
    data[labels, rows, cols] = 1.0
    return OneHotMask(data)


def synthetic_face(rng, lip=(0.2, -0.4, -0.4), skin=(0.35, 0.05, -0.1),
                   eye_shadow=None, size=256):
    """A controllable cartoon face: elliptical skin, eyes, nose, two lips,
    hair band, plus mild texture noise. Returns (image, label mask)."""
    h = w = size
    cy, cx = h // 2, w // 2
    yy, xx = np.mgrid[0:h, 0:w]
    labels = np.zeros((h, w), np.uint8)
    face = ((yy - cy) ** 2 / (0.40 * h) ** 2 + (xx - cx) ** 2 / (0.32 * w) ** 2) <= 1
    labels[face] = 1
    labels[face & (yy < 0.22 * h)] = 13  # hair
    nose = ((yy - 0.56 * h) ** 2 + (xx - cx) ** 2) <= (0.05 * h) ** 2
    labels[nose & face] = 2
    for eye_x, lab in ((0.38 * w, 4), (0.62 * w, 5)):
        eye = ((yy - 0.42 * h) ** 2 + (xx - eye_x) ** 2) <= (0.035 * h) ** 2
        labels[eye & face] = lab
    mouth_y = 0.72 * h
    lip_w = 0.10 * w
    upper = (np.abs(yy - (mouth_y - 0.02 * h)) <= 0.018 * h) & (np.abs(xx - cx) <= lip_w)
    lower = (np.abs(yy - (mouth_y + 0.025 * h)) <= 0.022 * h) & (np.abs(xx - cx) <= lip_w)
    labels[upper & face] = 11
    labels[lower & face] = 12

    img = np.full((3, h, w), -0.85, np.float32)
    base = {1: skin, 2: skin, 11: lip, 12: lip,
            4: (-0.7, -0.7, -0.7), 5: (-0.7, -0.7, -0.7),
            13: (-0.5, -0.6, -0.6)}
    if eye_shadow is not None:
        # paint a halo around the eyes on the skin
        for eye_x in (0.38 * w, 0.62 * w):
            halo = ((yy - 0.42 * h) ** 2 + (xx - eye_x) ** 2) <= (0.08 * h) ** 2
            for c in range(3):
                img[c][halo & (labels == 1)] = eye_shadow[c]
    for lab, color in base.items():
        sel = labels == lab
        if eye_shadow is not None and lab == 1:
            sel = sel & (img[0] == -0.85)
        for c in range(3):
            img[c][sel] = color[c]
    img += rng.normal(0.0, 0.02, img.shape).astype(np.float32)
    return FeatureMap(np.clip(img, -1.0, 1.0)), LabelMask(labels)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def face_pair(rng):
    src = synthetic_face(rng, lip=(0.1, -0.3, -0.3), skin=(0.3, 0.05, -0.1))
    ref = synthetic_face(
        rng, lip=(0.9, -0.6, -0.6), skin=(0.5, 0.15, 0.0),
        eye_shadow=(0.4, -0.2, 0.5),
    )
    return src, ref


@pytest.fixture
def face_files(face_pair, tmp_path):
    from spmt.tensor import save_image, save_label_mask

    (src_img, src_mask), (ref_img, ref_mask) = face_pair
    paths = {
        "source": tmp_path / "source.png",
        "source_mask": tmp_path / "source_mask.png",
        "ref": tmp_path / "ref.png",
        "ref_mask": tmp_path / "ref_mask.png",
    }
    save_image(src_img, paths["source"])
    save_label_mask(src_mask, paths["source_mask"])
    save_image(ref_img, paths["ref"])
    save_label_mask(ref_mask, paths["ref_mask"])
    return paths
