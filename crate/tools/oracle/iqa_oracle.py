#!/usr/bin/env python3
"""Independent reference implementation of the two no-reference quality
scorers, used to freeze golden values for the Rust tests.

Exports five natural photographs from scikit-image as 8-bit RGB PNGs and
records, for each one, the 36 natural-scene-statistics features and the
block-level quality score. All math runs in float64 on top of numpy/scipy
(`scipy.ndimage.correlate`, `scipy.special.gamma`), deliberately sharing no
code with the Rust implementation.

Pinned definitions (both implementations follow these exactly):

* luminance: 255 * (0.299 R + 0.587 G + 0.114 B) with RGB in [0, 1]
* MSCN: 7x7 Gaussian window, sigma 7/6, sampled at integer offsets and
  normalized; reflect padding; stabilizer C = 1
* GGD fit: moment matching of rho = E[x^2]/E[|x|]^2 against
  r(a) = G(1/a)G(3/a)/G(2/a)^2, grid a in [0.2, 10] step 1e-3 plus
  bisection refinement; sigma^2 = E[x^2]
* AGGD fit: strict sign classes for the side deviations, gamma-hat and
  r-hat-norm transform, same shape solver on the reciprocal ratio
* neighbor products: horizontal, vertical, diagonal, anti-diagonal, valid
  (non-wrapping) pairs only
* half scale: separable bilinear resize to floor-halved dimensions with
  half-pixel-center taps (center = (j+0.5)*ratio - 0.5, filterscale =
  max(ratio, 1), edge clamp, weight normalization), columns then rows
* block score: 16x16 blocks of MSCN after a top-left crop to multiples of
  16; variance ddof=1; active > 0.1; distorted if any sliding length-6
  edge segment has sample std < 0.1; else noisy if sigma > 2*beta with
  beta = |sigma - csd| / max(sigma, csd) and csd the ratio of the center
  two columns' std to the remaining fourteen's (0 when undefined);
  D += (1 - v) for distorted, v for noisy; score = 100*(D+1)/(N_active+1)
"""

import json
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import correlate
from scipy.special import gamma as Gamma

ROOT = Path(__file__).resolve().parents[2]
FIXTURES = ROOT / "crates/core/tests/fixtures/natural"
GOLDEN = ROOT / "crates/core/tests/golden"

ALPHAS = 0.2 + np.arange(9801) * 1e-3


def export_fixtures():
    from skimage import data

    FIXTURES.mkdir(parents=True, exist_ok=True)
    images = {
        "camera.png": data.camera(),
        "astronaut.png": data.astronaut(),
        "chelsea.png": data.chelsea(),
        "coffee.png": data.coffee(),
        "coins.png": data.coins(),
    }
    for name, arr in images.items():
        if arr.ndim == 2:
            arr = np.stack([arr] * 3, axis=-1)
        Image.fromarray(arr.astype(np.uint8), mode="RGB").save(FIXTURES / name)
    return sorted(images)


def luminance(path):
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64)
    unit = arr / 255.0
    return 255.0 * (0.299 * unit[..., 0] + 0.587 * unit[..., 1] + 0.114 * unit[..., 2])


def mscn_window():
    d = np.arange(-3, 4, dtype=np.float64)
    g = np.exp(-d * d / (2.0 * (7.0 / 6.0) ** 2))
    g /= g.sum()
    return np.outer(g, g)


def compute_mscn(gray):
    w = mscn_window()
    mu = correlate(gray, w, mode="reflect")
    musq = correlate(gray * gray, w, mode="reflect")
    var = np.clip(musq - mu * mu, 0.0, None)
    return (gray - mu) / (np.sqrt(var) + 1.0)


def moment_ratio(a):
    return Gamma(1.0 / a) * Gamma(3.0 / a) / Gamma(2.0 / a) ** 2


def solve_shape(target):
    grid = moment_ratio(ALPHAS)
    if target >= grid[0]:
        return float(ALPHAS[0])
    if target <= grid[-1]:
        return float(ALPHAS[-1])
    best = int(np.argmin(np.abs(grid - target)))
    lo = max(0.2, float(ALPHAS[max(best - 1, 0)]))
    hi = min(10.0, float(ALPHAS[min(best + 1, len(ALPHAS) - 1)]))
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if moment_ratio(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fit_ggd(x):
    assert x.size >= 100
    e_sq = np.mean(x * x)
    e_abs = np.mean(np.abs(x))
    assert e_sq - np.mean(x) ** 2 > 0.0
    alpha = solve_shape(e_sq / e_abs**2)
    return alpha, float(np.sqrt(e_sq))


def fit_aggd(x):
    assert x.size >= 100
    left = x[x < 0.0]
    right = x[x > 0.0]
    assert left.size and right.size
    sigma_l = float(np.sqrt(np.mean(left * left)))
    sigma_r = float(np.sqrt(np.mean(right * right)))
    g = sigma_l / sigma_r
    r_hat = np.mean(np.abs(x)) ** 2 / np.mean(x * x)
    r_norm = r_hat * (g**3 + 1.0) * (g + 1.0) / (g**2 + 1.0) ** 2
    alpha = solve_shape(1.0 / r_norm)
    eta = (
        (sigma_r - sigma_l)
        * (Gamma(2.0 / alpha) / Gamma(1.0 / alpha))
        * np.sqrt(Gamma(1.0 / alpha) / Gamma(3.0 / alpha))
    )
    return alpha, float(eta), sigma_l, sigma_r


def products(m):
    return [
        m[:, :-1] * m[:, 1:],
        m[:-1, :] * m[1:, :],
        m[:-1, :-1] * m[1:, 1:],
        m[:-1, 1:] * m[1:, :-1],
    ]


def resample_taps(in_len, out_len):
    ratio = in_len / out_len
    fscale = max(ratio, 1.0)
    support = 1.0 * fscale
    taps = []
    for j in range(out_len):
        center = (j + 0.5) * ratio - 0.5
        lo = max(int(np.floor(center - support)), 0)
        hi = min(int(np.ceil(center + support)), in_len - 1)
        idx = np.arange(lo, hi + 1)
        x = np.abs((idx - center) / fscale)
        w = np.where(x < 1.0, 1.0 - x, 0.0)
        s = w.sum()
        if s != 0.0:
            w = w / s
        taps.append((lo, w))
    return taps


def halve(gray):
    h, w = gray.shape
    oh, ow = max(h // 2, 1), max(w // 2, 1)
    mid = np.zeros((h, ow))
    for j, (lo, wt) in enumerate(resample_taps(w, ow)):
        mid[:, j] = gray[:, lo : lo + wt.size] @ wt
    out = np.zeros((oh, ow))
    for i, (lo, wt) in enumerate(resample_taps(h, oh)):
        out[i, :] = wt @ mid[lo : lo + wt.size, :]
    return out


def brisque_features(gray):
    feats = []
    img = gray
    for scale in range(2):
        if scale == 1:
            img = halve(img)
        m = compute_mscn(img)
        alpha, sigma = fit_ggd(m.ravel())
        feats += [alpha, sigma**2]
        for p in products(m):
            a, eta, sl, sr = fit_aggd(p.ravel())
            feats += [a, eta, sl**2, sr**2]
    assert len(feats) == 36 and all(np.isfinite(feats))
    return feats


def piqe_score(gray):
    h, w = gray.shape
    assert h >= 32 and w >= 32
    gray = gray[: h - h % 16, : w - w % 16]
    m = compute_mscn(gray)
    bh, bw = gray.shape[0] // 16, gray.shape[1] // 16
    dist_sum = 0.0
    n_active = 0
    for bi in range(bh):
        for bj in range(bw):
            blk = m[bi * 16 : bi * 16 + 16, bj * 16 : bj * 16 + 16]
            v = float(np.var(blk, ddof=1))
            if v <= 0.1:
                continue
            n_active += 1
            edges = [blk[0, :], blk[15, :], blk[:, 0], blk[:, 15]]
            impaired = any(
                float(np.std(e[s : s + 6], ddof=1)) < 0.1
                for e in edges
                for s in range(11)
            )
            if impaired:
                dist_sum += 1.0 - v
                continue
            sigma = np.sqrt(v)
            center = blk[:, 7:9].ravel()
            surround = np.concatenate([blk[:, :7], blk[:, 9:]], axis=1).ravel()
            denom = np.std(surround, ddof=1)
            csd = float(np.std(center, ddof=1) / denom) if denom > 0 else 0.0
            if not np.isfinite(csd):
                csd = 0.0
            beta = abs(sigma - csd) / max(sigma, csd)
            if sigma > 2.0 * beta:
                dist_sum += v
    return 100.0 * (dist_sum + 1.0) / (n_active + 1.0)


def main():
    names = export_fixtures()
    GOLDEN.mkdir(parents=True, exist_ok=True)
    golden = {}
    for name in names:
        gray = luminance(FIXTURES / name)
        golden[name] = {
            "brisque_features": brisque_features(gray),
            "piqe": piqe_score(gray),
        }
        print(f"{name}: piqe={golden[name]['piqe']:.4f}")
    out = GOLDEN / "iqa_golden.json"
    out.write_text(json.dumps(golden, indent=1) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
