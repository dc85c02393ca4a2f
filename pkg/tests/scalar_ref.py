"""Pure-python scalar loops mirroring the cell equations, used as oracles.

Nothing here touches numpy or the tape; matrices are lists of lists.
"""

import math


def sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def tolist(a):
    return [[float(v) for v in row] for row in a]


def affine(W, b, v):
    return [sum(W[r][c] * v[c] for c in range(len(v))) + b[r][0] for r in range(len(W))]


def lstm(p, h, c, x):
    hx = list(h) + list(x)
    f = [sig(z) for z in affine(p["W_f"], p["b_f"], hx)]
    i = [sig(z) for z in affine(p["W_i"], p["b_i"], hx)]
    ct = [math.tanh(z) for z in affine(p["W_C"], p["b_C"], hx)]
    c_new = [f[k] * c[k] + i[k] * ct[k] for k in range(len(h))]
    o = [sig(z) for z in affine(p["W_o"], p["b_o"], hx)]
    h_new = [o[k] * math.tanh(c_new[k]) for k in range(len(h))]
    return h_new, c_new


def gru(p, h, x):
    hx = list(h) + list(x)
    z = [sig(v) for v in affine(p["W_z"], p["b_z"], hx)]
    r = [sig(v) for v in affine(p["W_r"], p["b_r"], hx)]
    rh = [r[k] * h[k] for k in range(len(h))] + list(x)
    ht = [math.tanh(v) for v in affine(p["W_h"], p["b_h"], rh)]
    return [z[k] * h[k] + (1.0 - z[k]) * ht[k] for k in range(len(h))]


def cell_params(params, prefix):
    return {k[len(prefix):]: tolist(v) for k, v in params.items() if k.startswith(prefix)}


def run_cell(family, p, xs, hidden):
    """Final (h, c) after running over the list of input vectors ``xs``."""
    h, c = [0.0] * hidden, [0.0] * hidden
    for x in xs:
        if family == "LSTM":
            h, c = lstm(p, h, c, x)
        else:
            h = gru(p, h, x)
    return h, c


def step_cell(family, p, h, c, x):
    if family == "LSTM":
        return lstm(p, h, c, x)
    return gru(p, h, x), c


def head(params, v):
    W, b = tolist(params["head.W"]), tolist(params["head.b"])
    return affine(W, b, v)[0]


def model_forward(model, window, steps=1, teacher=None):
    """Scalar-loop prediction(s) for one window of univariate closes."""
    spec, P = model.spec, model.params
    fam, hdim = spec.family, spec.hidden
    xs = [[float(v)] for v in window]
    v = spec.variant
    if v == "Plain":
        h, _ = run_cell(fam, cell_params(P, "cell."), xs, hdim)
        return [head(P, h)]
    if v == "TwoPath":
        h1, _ = run_cell(fam, cell_params(P, "path1."), xs, hdim)
        h2, _ = run_cell(fam, cell_params(P, "path2."), xs, hdim)
        return [head(P, h1 + h2)]
    if v == "Bidirectional":
        hf, _ = run_cell(fam, cell_params(P, "fwd."), xs, hdim)
        hb, _ = run_cell(fam, cell_params(P, "bwd."), xs[::-1], hdim)
        return [head(P, hf + hb)]
    if v == "Seq2Seq":
        h, c = run_cell(fam, cell_params(P, "enc."), xs, hdim)
    else:
        hf, cf = run_cell(fam, cell_params(P, "fwd."), xs, hdim)
        hb, cb = run_cell(fam, cell_params(P, "bwd."), xs[::-1], hdim)
        h = [math.tanh(z) for z in affine(tolist(P["proj_h.W"]), tolist(P["proj_h.b"]), hf + hb)]
        c = affine(tolist(P["proj_c.W"]), tolist(P["proj_c.b"]), cf + cb) if fam == "LSTM" else cf
    dec = cell_params(P, "dec.")
    inp = [float(window[-1])]
    out = []
    for k in range(steps):
        h, c = step_cell(fam, dec, h, c, inp)
        y = head(P, h)
        out.append(y)
        inp = [float(teacher[k])] if teacher is not None else [y]
    return out
