"""Independent scalar-loop references.

Everything here is written with plain Python loops and ``math`` so it shares
no code path with the vectorized implementations under test.
"""
import math

OCCLUSION = (10, 11, 12, 13)
SKIN = 1


def cross_entropy(s, g):
    n, tot = 0, 0.0
    for i in range(len(g)):
        for j in range(len(g[0])):
            tot -= math.log(max(s[i][j][g[i][j]], 1e-12))
            n += 1
    return tot / n


def dice(s, g, k):
    inter = gg = ss = 0.0
    for i in range(len(g)):
        for j in range(len(g[0])):
            for c in range(k):
                gi = 1.0 if g[i][j] == c else 0.0
                inter += gi * s[i][j][c]
                gg += gi * gi
                ss += s[i][j][c] * s[i][j][c]
    return 1.0 - 2.0 * inter / (gg + ss + 1e-12)


def occlusion_value(g, occlusion=OCCLUSION):
    h, w = len(g), len(g[0])
    out = [[0.0] * w for _ in range(h)]
    for i in range(h):
        for j in range(w):
            hits = count = 0
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    a, b = i + di, j + dj
                    if 0 <= a < h and 0 <= b < w:
                        count += 1
                        hits += g[a][b] in occlusion
            out[i][j] = hits / count
    return out


def occlusion_penalty(s, g, occlusion=OCCLUSION, skin=SKIN):
    p = occlusion_value(g, occlusion)
    tot, n = 0.0, 0
    for i in range(len(g)):
        for j in range(len(g[0])):
            gf = 1.0 if g[i][j] == skin else 0.0
            tot += p[i][j] * (gf - s[i][j][skin]) ** 2
            n += 1
    return tot / n


def _boundary_points(lab):
    h, w = len(lab), len(lab[0])
    pts = []
    for i in range(h):
        for j in range(w):
            for a, b in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
                if 0 <= a < h and 0 <= b < w and lab[a][b] != lab[i][j]:
                    pts.append((i, j))
                    break
    return pts


def boundary_distance(pred, g, empty="diagonal"):
    """Brute-force symmetric mean nearest-boundary distance."""
    a, b = _boundary_points(pred), _boundary_points(g)
    if not a and not b:
        return 0.0
    if not a or not b:
        return math.hypot(len(g), len(g[0])) if empty == "diagonal" else 0.0

    def mean_nearest(src, dst):
        return sum(min(math.hypot(p[0] - q[0], p[1] - q[1]) for q in dst) for p in src) / len(src)

    return 0.5 * (mean_nearest(a, b) + mean_nearest(b, a))


def argmax_map(s):
    out = []
    for row in s:
        r = []
        for px in row:
            best = 0
            for c in range(1, len(px)):
                if px[c] > px[best]:
                    best = c
            r.append(best)
        out.append(r)
    return out


def total_loss(s, g, k, alpha, occlusion=OCCLUSION, skin=SKIN):
    d = boundary_distance(argmax_map(s), g)
    lw = 1.0 / (1.0 + d)
    return (lw * cross_entropy(s, g) + (1.0 - lw) * dice(s, g, k)
            + alpha * occlusion_penalty(s, g, occlusion, skin))


def conv2d(x, w, b, stride=1, pad=None):
    """Direct six-loop NHWC cross-correlation."""
    n, h, wd, cin = len(x), len(x[0]), len(x[0][0]), len(x[0][0][0])
    kh, kw, cout = len(w), len(w[0]), len(w[0][0][0])
    pad = kh // 2 if pad is None else pad
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = [[[[b[o] for o in range(cout)] for _ in range(wo)] for _ in range(ho)] for _ in range(n)]
    for bi in range(n):
        for i in range(ho):
            for j in range(wo):
                for o in range(cout):
                    acc = out[bi][i][j][o]
                    for di in range(kh):
                        for dj in range(kw):
                            a, c = i * stride + di - pad, j * stride + dj - pad
                            if 0 <= a < h and 0 <= c < wd:
                                for ci in range(cin):
                                    acc += x[bi][a][c][ci] * w[di][dj][ci][o]
                    out[bi][i][j][o] = acc
    return out


def bilinear(img, x, y, border="zero"):
    """Scalar bilinear sample of a 2-D list image at continuous (x, y)."""
    h, w = len(img), len(img[0])

    def px(r, c):
        if border == "replicate":
            r = min(max(r, 0), h - 1)
            c = min(max(c, 0), w - 1)
        elif not (0 <= r < h and 0 <= c < w):
            return 0.0
        return img[r][c]

    x0, y0 = math.floor(x), math.floor(y)
    fx, fy = x - x0, y - y0
    return ((1 - fx) * (1 - fy) * px(y0, x0) + fx * (1 - fy) * px(y0, x0 + 1)
            + (1 - fx) * fy * px(y0 + 1, x0) + fx * fy * px(y0 + 1, x0 + 1))


def confusion(pred, g, k):
    tp, fp, fn = [0] * k, [0] * k, [0] * k
    for i in range(len(g)):
        for j in range(len(g[0])):
            p, t = pred[i][j], g[i][j]
            if p == t:
                tp[t] += 1
            else:
                fp[p] += 1
                fn[t] += 1
    return tp, fp, fn
