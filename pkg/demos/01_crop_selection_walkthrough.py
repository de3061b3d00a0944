"""
Crop selection, step by step
============================

Score every crop of a view with a deterministic function, suppress
non-maxima, pick the winning window, and hand only that crop to the
feature extractor.
"""

import numpy as np

from rics import (
    ConstantSpec,
    ImageBuf,
    MexicanHatSpec,
    RandHashSpec,
    RicsConfig,
    audit_record,
    compute_score_map,
    nms_candidates,
    rics_infer,
    scoremap_to_text,
    select_crop,
    to_luminance,
)

# a reproducible "photo": noise plus a bright blob off-center
rng = np.random.default_rng(0)
yy, xx = np.mgrid[0:64, 0:64]
blob = 140.0 * np.exp(-((yy - 24.0) ** 2 + (xx - 40.0) ** 2) / 60.0)
pixels = np.clip(rng.integers(0, 90, (64, 64, 3)) + blob[:, :, None], 0, 255).astype(np.uint8)
view = ImageBuf(pixels)
luma = to_luminance(view)

# 1. the hash score: exact integer dot product with a fixed random filter,
#    reduced modulo a prime; a different image region wins per image, but
#    the same region wins for the same pixels, always
hash_map = compute_score_map(luma, RandHashSpec(seed=7), crop_size=24)
print("hash score map:", hash_map.rows, "x", hash_map.cols, "entries")
print("interior strict local maxima:", nms_candidates(hash_map).tolist())

sel = select_crop(luma, RicsConfig(crop_size=24, score=RandHashSpec(seed=7)))
print("hash selection:", sel)

# 2. the center-surround score: zero-sum Ricker kernel cascade; the blob is
#    a genuine region of interest, so the first scale already has a peak
mh_sel = select_crop(luma, RicsConfig(crop_size=24, score=MexicanHatSpec((8.0, 4.0))))
print("ricker selection:", mh_sel)

# 3. full inference: selection on luminance, embedding of the color crop
record = rics_infer(view, RicsConfig(crop_size=24, score=RandHashSpec(seed=7)), ConstantSpec(dim=4))
print("audit line:", audit_record("demo-image", "realistic", 24, "randhash", record))

# 4. score maps export as plain text for eyeballing
small = compute_score_map(luma, MexicanHatSpec((8.0,)), crop_size=56)
print("\nsmall map dump:\n" + scoremap_to_text(small))
