"""Independent reference implementations used to check the production code.

These deliberately avoid the library's vectorized paths: the recurrent
reference walks frame by frame through the single-step operations, and the
split reference enumerates subsets with plain-Python bitmask loops.
"""

import math

import numpy as np

from egobatch.nnet import LstmState


def unbatched_reference_logits(model, seq, batch_size, overlap,
                               retention="earlier"):
    """Frame-by-frame carry-over simulation using only single-step ops."""
    n, m = batch_size, overlap
    length = len(seq)
    stride = n - m
    batches = 1 if length <= n else -(-(length - n) // stride) + 1
    store = None
    logits = np.full((length, model.head.out_dim), np.nan)
    for k in range(batches):
        start = k * stride
        state = LstmState.zeros(model.lstm.hidden)
        h_list = []
        for j in range(n):
            frame = min(start + j, length - 1)  # right padding repeats the end
            if k > 0 and j < m:
                z = store[j]
            else:
                z = model.embed.forward(seq.features[frame])
            state = model.lstm.step(z, state)
            h_list.append(state.h.copy())
            keep = (k == 0 or j >= m) if retention == "earlier" else True
            if keep and start + j < length:
                logits[start + j] = model.head.forward(state.h)
        store = h_list[-m:]
    assert not np.isnan(logits).any()
    return logits


def brute_force_split(bin_labels, num_classes, test_bins, val_bins,
                      stage2_reference="whole"):
    """Two-stage exhaustive split selection over explicit bins."""

    def dist(counts):
        total = sum(counts)
        return None if total == 0 else [c / total for c in counts]

    def distance(p, q):
        coeff = sum(math.sqrt(a * b) for a, b in zip(p, q))
        if coeff <= 0:
            return math.inf
        return max(0.0, -math.log(min(coeff, 1.0)))

    def counts_of(ids):
        counts = [0] * num_classes
        for b in ids:
            for label in bin_labels[b]:
                counts[label] += 1
        return counts

    total_bins = len(bin_labels)
    whole = dist(counts_of(range(total_bins)))

    def stage(candidates, choose, reference):
        best = None
        best_val = None
        for mask in range(1 << len(candidates)):
            picked = [candidates[i] for i in range(len(candidates))
                      if mask >> i & 1]
            if len(picked) != choose:
                continue
            rest = [b for b in candidates if b not in picked]
            d_pick = dist(counts_of(picked))
            d_rest = dist(counts_of(rest))
            value = math.inf
            if d_pick is not None and d_rest is not None:
                value = distance(d_pick, reference) + distance(d_rest, reference)
            key = tuple(sorted(picked))
            # bitmask order is not lexicographic, so ties must compare keys
            if best is None or value < best_val or \
                    (value == best_val and key < best):
                best, best_val = key, value
        return best, best_val

    test_ids, objective_test = stage(list(range(total_bins)), test_bins, whole)
    remaining = [b for b in range(total_bins) if b not in test_ids]
    reference = whole
    if stage2_reference == "rest":
        reference = dist(counts_of(remaining))
    val_ids, objective_val = stage(remaining, val_bins, reference)
    return test_ids, val_ids, objective_test, objective_val
