"""Independent scalar-loop oracles.

Everything here is written with explicit Python loops and math-module
scalar arithmetic so the vectorized library implementations are checked
against a genuinely separate computation path.
"""

from __future__ import annotations

import math

import numpy as np


def matmul(a, b):
    n, k = len(a), len(a[0])
    k2, m = len(b), len(b[0])
    assert k == k2
    out = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += a[i][t] * b[t][j]
            out[i][j] = acc
    return np.asarray(out)


def softmax_vec(values):
    m = max(values)
    exps = [math.exp(v - m) for v in values]
    total = sum(exps)
    return [e / total for e in exps]


def a2v_forward(regions, attrs, w1, w2):
    """Scalar-loop attribute->visual pass: (beta, F, psi)."""
    num_regions, d_v = regions.shape
    num_attrs, d_a = attrs.shape
    logits = [[0.0] * num_regions for _ in range(num_attrs)]
    for k in range(num_attrs):
        for r in range(num_regions):
            acc = 0.0
            for p in range(d_a):
                for q in range(d_v):
                    acc += attrs[k][p] * w1[p][q] * regions[r][q]
            logits[k][r] = acc
    beta = [[0.0] * num_regions for _ in range(num_attrs)]
    for r in range(num_regions):
        col = softmax_vec([logits[k][r] for k in range(num_attrs)])
        for k in range(num_attrs):
            beta[k][r] = col[k]
    feats = [[0.0] * d_v for _ in range(num_attrs)]
    for k in range(num_attrs):
        for q in range(d_v):
            acc = 0.0
            for r in range(num_regions):
                acc += beta[k][r] * regions[r][q]
            feats[k][q] = acc
    psi = [0.0] * num_attrs
    for k in range(num_attrs):
        acc = 0.0
        for p in range(d_a):
            for q in range(d_v):
                acc += attrs[k][p] * w2[p][q] * feats[k][q]
        psi[k] = acc
    return np.asarray(beta), np.asarray(feats), np.asarray(psi)


def v2a_forward(regions, attrs, w3, w4, w_att):
    """Scalar-loop visual->attribute pass: (tau, S, psi_bar, Psi)."""
    num_regions, d_v = regions.shape
    num_attrs, d_a = attrs.shape
    logits = [[0.0] * num_attrs for _ in range(num_regions)]
    for r in range(num_regions):
        for k in range(num_attrs):
            acc = 0.0
            for q in range(d_v):
                for p in range(d_a):
                    acc += regions[r][q] * w3[q][p] * attrs[k][p]
            logits[r][k] = acc
    tau = [[0.0] * num_attrs for _ in range(num_regions)]
    for k in range(num_attrs):
        col = softmax_vec([logits[r][k] for r in range(num_regions)])
        for r in range(num_regions):
            tau[r][k] = col[r]
    sem = [[0.0] * d_a for _ in range(num_regions)]
    for r in range(num_regions):
        for p in range(d_a):
            acc = 0.0
            for k in range(num_attrs):
                acc += tau[r][k] * attrs[k][p]
            sem[r][p] = acc
    psi_bar = [0.0] * num_regions
    for r in range(num_regions):
        acc = 0.0
        for q in range(d_v):
            for p in range(d_a):
                acc += regions[r][q] * w4[q][p] * sem[r][p]
        psi_bar[r] = acc
    big_psi = [0.0] * num_attrs
    for k in range(num_attrs):
        acc = 0.0
        for r in range(num_regions):
            att_rk = 0.0
            for q in range(d_v):
                for p in range(d_a):
                    att_rk += regions[r][q] * w_att[q][p] * attrs[k][p]
            acc += psi_bar[r] * att_rk
        big_psi[k] = acc
    return np.asarray(tau), np.asarray(sem), np.asarray(psi_bar), np.asarray(big_psi)


def class_scores(embedding, class_semantics):
    num_classes, k = class_semantics.shape
    out = [0.0] * num_classes
    for c in range(num_classes):
        acc = 0.0
        for j in range(k):
            acc += embedding[j] * class_semantics[c][j]
        out[c] = acc
    return np.asarray(out)


def acec_loss(scores, labels, seen, unseen, lambda_cal, sign):
    """Scalar-loop calibrated cross-entropy; returns the loss only."""
    batch, num_classes = scores.shape
    seen = sorted(int(c) for c in seen)
    unseen = sorted(int(c) for c in unseen)
    total = 0.0
    for i in range(batch):
        seen_scores = [scores[i][c] for c in seen]
        probs = softmax_vec(seen_scores)
        total += -math.log(probs[seen.index(int(labels[i]))])
        if lambda_cal > 0 and unseen:
            shifted = [
                scores[i][c] + (1.0 if c in unseen else -1.0)
                for c in range(num_classes)
            ]
            q = softmax_vec(shifted)
            cal = 0.0
            for c in unseen:
                cal += -math.log(q[c])
            total += lambda_cal * cal if sign == "prose" else -lambda_cal * cal
    return total / batch


def distill_loss(scores1, scores2, eps, use_jsd=True, use_l2=True):
    """Scalar-loop symmetric-KL + squared-L2 distance; returns the loss only."""
    batch, width = scores1.shape
    total = 0.0
    for i in range(batch):
        def clamped(row):
            probs = softmax_vec(list(row))
            probs = [min(max(v, eps), 1.0) for v in probs]
            norm = sum(probs)
            return [v / norm for v in probs]

        p = clamped(scores1[i])
        q = clamped(scores2[i])
        row_loss = 0.0
        if use_jsd:
            kl_pq = sum(p[c] * (math.log(p[c]) - math.log(q[c])) for c in range(width))
            kl_qp = sum(q[c] * (math.log(q[c]) - math.log(p[c])) for c in range(width))
            row_loss += 0.5 * (kl_pq + kl_qp)
        if use_l2:
            row_loss += sum((p[c] - q[c]) ** 2 for c in range(width))
        total += row_loss
    return total / batch


def predict(psi, big_psi, class_semantics, seen, unseen, alpha1, alpha2, mode):
    """Exhaustive-argmax calibrated prediction."""
    num_classes = class_semantics.shape[0]
    unseen = set(int(c) for c in unseen)
    fused = [alpha1 * psi[k] + alpha2 * big_psi[k] for k in range(len(psi))]
    candidates = sorted(unseen) if mode == "czsl" else list(range(num_classes))
    best_class, best_score = None, None
    for c in candidates:
        score = sum(fused[k] * class_semantics[c][k] for k in range(len(fused)))
        score += 1.0 if c in unseen else -1.0
        if best_score is None or score > best_score:
            best_class, best_score = c, score
    return best_class


def harmonic_mean(s, u):
    if s + u == 0:
        return 0.0
    return 2.0 * s * u / (s + u)
