#!/usr/bin/env python3
"""Regenerates the test fixtures and their expected outputs.

Everything here is written with numpy, struct, gzip and Pillow, and the
expected segmentation is computed with scipy.ndimage and skimage, so the
Rust readers and the Rust pipeline are checked against an independent
implementation.

Run from this directory:  python3 make_fixtures.py
"""

import gzip
import json
import math
import os
import struct

import numpy as np
from PIL import Image
from scipy import ndimage
from skimage.morphology import disk

HERE = os.path.dirname(os.path.abspath(__file__))
RNG = np.random.default_rng(20240611)

# Harvard-Oxford cortical names in atlas index order (label = index + 1).
HO_CORTICAL = [
    "Frontal Pole", "Insular Cortex", "Superior Frontal Gyrus",
    "Middle Frontal Gyrus", "Inferior Frontal Gyrus, pars triangularis",
    "Inferior Frontal Gyrus, pars opercularis", "Precentral Gyrus",
    "Temporal Pole", "Superior Temporal Gyrus, anterior division",
    "Superior Temporal Gyrus, posterior division",
    "Middle Temporal Gyrus, anterior division",
    "Middle Temporal Gyrus, posterior division",
    "Middle Temporal Gyrus, temporooccipital part",
    "Inferior Temporal Gyrus, anterior division",
    "Inferior Temporal Gyrus, posterior division",
    "Inferior Temporal Gyrus, temporooccipital part", "Postcentral Gyrus",
    "Superior Parietal Lobule", "Supramarginal Gyrus, anterior division",
    "Supramarginal Gyrus, posterior division", "Angular Gyrus",
    "Lateral Occipital Cortex, superior division",
    "Lateral Occipital Cortex, inferior division", "Intracalcarine Cortex",
    "Frontal Medial Cortex",
    "Juxtapositional Lobule Cortex (formerly Supplementary Motor Cortex)",
    "Subcallosal Cortex", "Paracingulate Gyrus",
    "Cingulate Gyrus, anterior division", "Cingulate Gyrus, posterior division",
    "Precuneous Cortex", "Cuneal Cortex", "Frontal Orbital Cortex",
    "Parahippocampal Gyrus, anterior division",
    "Parahippocampal Gyrus, posterior division", "Lingual Gyrus",
    "Temporal Fusiform Cortex, anterior division",
    "Temporal Fusiform Cortex, posterior division",
    "Temporal Occipital Fusiform Cortex", "Occipital Fusiform Gyrus",
    "Frontal Operculum Cortex", "Central Opercular Cortex",
    "Parietal Operculum Cortex", "Planum Polare",
    "Heschl's Gyrus (includes H1 and H2)", "Planum Temporale",
    "Supracalcarine Cortex", "Occipital Pole",
]

SAMPLE_ID = "fixture-01"
ATLAS_ID = "HarvardOxford-cort-synthetic"
TIMESTAMP = "1970-01-01T00:00:00Z"
ALPHA_RANGE = range(70, 98)
S_MIN = 50
RADIUS = 3
EPS = 1e-6


def path(*parts):
    p = os.path.join(HERE, *parts)
    os.makedirs(os.path.dirname(p), exist_ok=True)
    return p


# ---------------------------------------------------------------- inputs

def make_heatmap():
    rows, cols = np.mgrid[0:64, 0:64].astype(np.float64)
    main = np.exp(-(((rows - 30) / 7.0) ** 2 + ((cols - 35) / 9.0) ** 2) / 2)
    side = 0.55 * np.exp(-(((rows - 52) / 2.5) ** 2 + ((cols - 10) / 2.5) ** 2) / 2)
    h = main + side + RNG.uniform(0, 0.12, size=(64, 64))
    h = (h - h.min()) / (h.max() - h.min())
    return h.astype(np.float32)


def make_gt_mask():
    rows, cols = np.mgrid[0:64, 0:64]
    inside = ((rows - 31) / 8.0) ** 2 + ((cols - 33) / 10.0) ** 2 <= 1.0
    return np.where(inside, 255, 0).astype(np.uint8)


def make_atlas():
    """(32, 32, 8) labels; axis 0 is x (rows of a slice), axis 1 is y."""
    vol = np.zeros((32, 32, 8), dtype=np.int16)
    for z in range(8):
        labels = (29, 2, 30, 42) if z % 2 == 0 else (7, 17, 19, 45)
        rs, cs = 12 + z, 13 + z // 2
        sl = np.zeros((32, 32), dtype=np.int16)
        sl[:rs, :cs] = labels[0]
        sl[:rs, cs:] = labels[1]
        sl[rs:, :cs - 1] = labels[2]
        sl[rs:, cs - 1:] = labels[3]
        sl[:2, :] = 0
        sl[:, 30:] = 0
        vol[:, :, z] = sl
    return vol


# ------------------------------------------------------------------ NIfTI

def nifti_header(shape, datatype, bitpix, magic, vox_offset, big_endian=False):
    e = ">" if big_endian else "<"
    h = bytearray(348)
    struct.pack_into(e + "i", h, 0, 348)
    struct.pack_into(e + "8h", h, 40, 3, *shape, 1, 1, 1, 1)
    struct.pack_into(e + "hh", h, 70, datatype, bitpix)
    struct.pack_into(e + "8f", h, 76, 1, 1, 1, 1, 1, 1, 1, 1)
    struct.pack_into(e + "f", h, 108, vox_offset)
    struct.pack_into(e + "ff", h, 112, 1.0, 0.0)  # scl_slope, scl_inter
    h[344:348] = magic
    return bytes(h)


def write_niftis(vol):
    le = vol.astype("<i2").tobytes(order="F")
    single = nifti_header(vol.shape, 4, 16, b"n+1\0", 352.0) + b"\0" * 4 + le
    with open(path("atlas.nii"), "wb") as f:
        f.write(single)
    with open(path("atlas.nii.gz"), "wb") as f:
        f.write(gzip.compress(single, mtime=0))

    with open(path("atlas_pair.hdr"), "wb") as f:
        f.write(nifti_header(vol.shape, 4, 16, b"ni1\0", 0.0) + b"\0" * 4)
    with open(path("atlas_pair.img"), "wb") as f:
        f.write(le)

    be = vol.astype(">i2").tobytes(order="F")
    with open(path("atlas_be.nii"), "wb") as f:
        f.write(nifti_header(vol.shape, 4, 16, b"n+1\0", 352.0, big_endian=True) + b"\0" * 4 + be)

    # float32 labels with slope 2 / intercept 1 on half-values.
    f32 = ((vol.astype(np.float32) - 1.0) / 2.0).astype("<f4").tobytes(order="F")
    hdr = bytearray(nifti_header(vol.shape, 16, 32, b"n+1\0", 352.0))
    struct.pack_into("<ff", hdr, 112, 2.0, 1.0)
    with open(path("atlas_scaled_f32.nii.gz"), "wb") as f:
        f.write(gzip.compress(bytes(hdr) + b"\0" * 4 + f32, mtime=0))

    bad = bytearray(single)
    bad[344:348] = b"n+2\0"
    with open(path("corrupt", "bad_magic.nii"), "wb") as f:
        f.write(bytes(bad))
    bad = bytearray(single)
    struct.pack_into("<i", bad, 0, 540)
    with open(path("corrupt", "bad_sizeof_hdr.nii"), "wb") as f:
        f.write(bytes(bad))
    with open(path("corrupt", "truncated.nii.gz"), "wb") as f:
        f.write(gzip.compress(single[:352 + 100], mtime=0))
    with open(path("corrupt", "bad_magic.npy"), "wb") as f:
        f.write(b"\x93NUMPX" + b"\x01\x00" + b"\x00" * 56)


def write_labels():
    with open(path("labels.csv"), "w", newline="") as f:
        f.write("index,name\n")
        for i, name in enumerate(HO_CORTICAL):
            f.write(f'{i + 1},"{name}"\n')
    with open(path("labels.xml"), "w") as f:
        f.write('<?xml version="1.0" encoding="ISO-8859-1"?>\n<atlas>\n<header>\n')
        f.write("<name>Harvard-Oxford Cortical Structural Atlas (synthetic)</name>\n")
        f.write("</header>\n<data>\n")
        for i, name in enumerate(HO_CORTICAL):
            esc = name.replace("&", "&amp;").replace("'", "&apos;")
            f.write(f'<label index="{i}" x="0" y="0" z="0">{esc}</label>\n')
        f.write("</data>\n</atlas>\n")


def write_npy_samples():
    samples = {
        "u8_3x4": np.arange(12, dtype=np.uint8).reshape(3, 4),
        "i16_2x5": (np.arange(10, dtype=np.int16) - 5).reshape(2, 5),
        "f64_4x3": RNG.standard_normal((4, 3)),
        "bool_3x3": np.eye(3, dtype=bool),
        "f32_1x4x3": RNG.random((1, 4, 3)).astype(np.float32),
        "i64_vec7": np.arange(7, dtype=np.int64) * 1_000_000_007,
    }
    for name, arr in samples.items():
        np.save(path("npy", f"{name}.npy"), arr)
    np.save(path("corrupt", "heatmap_int32.npy"), np.zeros((4, 4), dtype=np.int32))
    np.save(path("corrupt", "heatmap_3d.npy"), np.zeros((2, 3, 4), dtype=np.float32))


# ---------------------------------------------------------------- oracle

def percentile(sorted_vals, alpha):
    n = len(sorted_vals)
    rank = max(math.ceil(alpha * n / 100.0), 1)
    return sorted_vals[rank - 1]


def dice(a, b, eps):
    inter = np.logical_and(a, b).sum()
    return (2.0 * inter + eps) / (a.sum() + b.sum() + eps)


def iou(a, b):
    union = np.logical_or(a, b).sum()
    return 1.0 if union == 0 else np.logical_and(a, b).sum() / union


def segment(h, gt):
    h = h.astype(np.float64)
    vals = np.sort(h.ravel())
    best = None
    for alpha in ALPHA_RANGE:
        t = percentile(vals, alpha)
        d = dice(h >= t, gt, EPS)
        if best is None or d > best[2]:
            best = (alpha, t, d)
    alpha, t, search = best
    raw = h >= t
    four = ndimage.generate_binary_structure(2, 1)
    lab, n = ndimage.label(raw, structure=four)
    sizes = ndimage.sum(raw, lab, index=range(1, n + 1))
    keep = np.isin(lab, [i + 1 for i, s in enumerate(sizes) if s >= S_MIN])
    se = disk(RADIUS).astype(bool)
    dil = ndimage.binary_dilation(keep, structure=se, border_value=0)
    final = ndimage.binary_erosion(dil, structure=se, border_value=1)
    return alpha, t, search, final


def coverage(mask, vol, z):
    sl = vol[:, :, z]
    R, C = sl.shape
    rows, cols = mask.shape
    res = np.array([[sl[i * R // rows, j * C // cols] for j in range(cols)] for i in range(rows)])
    counts = {}
    for lab in res[mask]:
        if lab != 0:
            counts[int(lab)] = counts.get(int(lab), 0) + 1
    total = sum(counts.values())
    rows_out = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(lab, HO_CORTICAL[lab - 1], n, n / total * 100.0) for lab, n in rows_out]


def findings_json(alpha, dsc, iou_v, cov, z, pred):
    regions = [
        f'    {{\n      "name": {json.dumps(name)},\n      "label": {lab},\n'
        f'      "voxel_count": {n},\n      "percentage": {pct:.2f}\n    }}'
        for lab, name, n, pct in cov
    ]
    regions_txt = "[\n" + ",\n".join(regions) + "\n  ]" if regions else "[]"
    return (
        "{\n"
        '  "schema_version": "1.0.0",\n'
        f'  "model_name": {json.dumps(pred["model_name"])},\n'
        f'  "predicted_class": "{pred["predicted_class"]}",\n'
        f'  "prediction_confidence": {json.dumps(pred["confidence"])},\n'
        '  "saliency_method": "GradCAMpp",\n'
        f'  "regions": {regions_txt},\n'
        '  "segmentation_metrics": {\n'
        f'    "dsc": {float(dsc)!r},\n'
        f'    "iou": {float(iou_v)!r},\n'
        f'    "alpha_star": {float(alpha)!r}\n'
        "  },\n"
        '  "provenance": {\n'
        f'    "source_image_id": "{SAMPLE_ID}",\n'
        f'    "atlas_id": "{ATLAS_ID}",\n'
        f'    "slice_index": {z},\n'
        f'    "created_at": "{TIMESTAMP}"\n'
        "  }\n"
        "}\n"
    )


def write_bad_findings(good):
    doc = json.loads(good)
    doc["regions"][0]["percentage"] = 120.0
    with open(path("findings", "bad_percentage.json"), "w") as f:
        json.dump(doc, f, indent=2)
    doc = json.loads(good)
    del doc["saliency_method"]
    with open(path("findings", "missing_saliency_method.json"), "w") as f:
        json.dump(doc, f, indent=2)


def main():
    heat = make_heatmap()
    gt = make_gt_mask()
    vol = make_atlas()
    pred = {"model_name": "InceptionResNetV2", "predicted_class": "Meningioma", "confidence": 0.9312}

    np.save(path("heatmap.npy"), heat)
    np.save(path("sample", "heatmap_gradcampp.npy"), heat)
    Image.fromarray(gt, mode="L").save(path("gt_mask.png"))
    Image.fromarray(gt, mode="L").save(path("sample", "gt_mask.png"))
    for p in (path("pred.json"), path("sample", "pred.json")):
        with open(p, "w") as f:
            json.dump(pred, f, indent=2)
            f.write("\n")
    write_niftis(vol)
    write_labels()
    write_npy_samples()

    alpha, t, search, final = segment(heat, gt > 127)
    z = vol.shape[2] // 2
    cov = coverage(final, vol, z)
    dsc, iou_v = dice(final, gt > 127, EPS), iou(final, gt > 127)
    Image.fromarray(np.where(final, 255, 0).astype(np.uint8), mode="L").save(
        path("expected", "mask.png"))
    with open(path("expected", "segmentation.json"), "w") as f:
        json.dump({"alpha_star": alpha, "threshold": float(t), "search_dsc": float(search),
                   "dsc": float(dsc), "iou": float(iou_v), "foreground": int(final.sum())},
                  f, indent=2)
        f.write("\n")
    with open(path("expected", "coverage.csv"), "w") as f:
        f.write("label,region,voxel_count,percentage\n")
        for lab, name, n, pct in cov:
            q = f'"{name}"' if "," in name else name
            f.write(f"{lab},{q},{n},{pct:.6f}\n")
    with open(path("expected", "findings.json"), "w") as f:
        f.write(findings_json(alpha, dsc, iou_v, cov, z, pred))
    write_bad_findings(findings_json(alpha, dsc, iou_v, cov, z, pred))
    print(f"alpha*={alpha} dsc={dsc:.4f} iou={iou_v:.4f} regions={[c[0] for c in cov]}")


if __name__ == "__main__":
    main()
