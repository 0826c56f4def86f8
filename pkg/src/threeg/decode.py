"""Caption generation, corpus BLEU and gate/attention trace export."""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .data import BOS, EOS, PAD, UNK
from .fusion import StepTrace
from .model import _plan, initial_state, prepare, step

EXCLUDED = (PAD, BOS, UNK)


@dataclass
class Hypothesis:
    tokens: list  # generated indices, no BOS; ends with EOS unless truncated
    logprob: float = 0.0
    traces: list = field(default_factory=list)

    @property
    def finished(self):
        return bool(self.tokens) and self.tokens[-1] == EOS

    @property
    def score(self):
        return self.logprob / max(len(self.tokens), 1)

    def words(self, vocab):
        return vocab.decode([t for t in self.tokens if t != EOS])


def log_softmax(y):
    shifted = y - np.max(y)
    return shifted - np.log(np.exp(shifted).sum())


def _allowed_logp(y):
    logp = log_softmax(y)
    masked = logp.copy()
    masked[list(EXCLUDED)] = -np.inf
    return logp, masked


def greedy_decode(features, store, config, max_len=None, forcing=None):
    """Argmax decoding; ties go to the lowest index, reserved tokens other than EOS are never emitted."""
    max_len = config.max_len if max_len is None else max_len
    plan = _plan(config, forcing)
    ctx = prepare(features, store, config)
    st = initial_state(ctx, config.h)
    hyp = Hypothesis([])
    token = BOS
    for t in range(max_len):
        st, y, cache = step(ctx, st, token, t, store, plan)
        logp, masked = _allowed_logp(y)
        token = int(np.argmax(masked))
        hyp.tokens.append(token)
        hyp.logprob += float(logp[token])
        hyp.traces.append(StepTrace(t, cache["g"], cache["alpha"]))
        if token == EOS:
            break
    return hyp


def beam_decode(features, store, config, beam, max_len=None, forcing=None, normalize=True):
    """Length-synchronous beam search.

    At each step the ``beam`` best continuations of all live hypotheses are
    kept; those ending in EOS (or reaching ``max_len``) retire to the pool and
    free their slot.  The pool is returned best first, ranked by mean
    per-token log probability (``normalize``) or total log probability.
    """
    if beam < 1:
        raise ValueError(f"beam width must be >= 1, got {beam}")
    max_len = config.max_len if max_len is None else max_len
    plan = _plan(config, forcing)
    ctx = prepare(features, store, config)
    live = [(Hypothesis([]), initial_state(ctx, config.h), BOS)]
    pool = []
    for t in range(max_len):
        candidates = []
        for hyp, st, token in live:
            new_st, y, cache = step(ctx, st, token, t, store, plan)
            logp, masked = _allowed_logp(y)
            trace = StepTrace(t, cache["g"], cache["alpha"])
            for k in np.flatnonzero(np.isfinite(masked)):
                candidates.append((hyp.logprob + float(logp[k]), hyp, new_st, int(k), trace))
        # stable sort: ties keep parent order, then token order
        candidates.sort(key=lambda c: -c[0])
        live = []
        for lp, parent, st, k, trace in candidates[:beam]:
            hyp = Hypothesis(parent.tokens + [k], lp, parent.traces + [trace])
            if k == EOS or t == max_len - 1:
                pool.append(hyp)
            else:
                live.append((hyp, st, k))
        beam -= len(candidates[:beam]) - len(live)
        if not live:
            break
    key = (lambda hy: -hy.score) if normalize else (lambda hy: -hy.logprob)
    pool.sort(key=key)
    return pool


def sequence_logprob(features, tokens, store, config, forcing=None):
    """Exact log probability of a generated continuation ``tokens`` (no BOS) under the model."""
    plan = _plan(config, forcing)
    ctx = prepare(features, store, config)
    st = initial_state(ctx, config.h)
    total = 0.0
    prev = BOS
    for t, tok in enumerate(tokens):
        st, y, _ = step(ctx, st, prev, t, store, plan)
        total += float(log_softmax(y)[tok])
        prev = tok
    return total


# --- BLEU -------------------------------------------------------------------


@dataclass
class BleuReport:
    bleu: list  # BLEU-1 .. BLEU-max_n
    bp: float
    matches: list  # clipped n-gram matches per n
    totals: list  # candidate n-gram counts per n
    candidates: int
    hyp_len: int = 0
    ref_len: int = 0

    def to_dict(self):
        out = {f"bleu{n}": b for n, b in enumerate(self.bleu, start=1)}
        out["bp"] = self.bp
        out["candidates"] = self.candidates
        return out


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(candidates, references, max_n=4):
    """Corpus BLEU-1..max_n with per-reference clipping and no smoothing.

    ``references[i]`` is the list of reference token lists for ``candidates[i]``.
    """
    if not candidates:
        raise ValueError("corpus_bleu needs at least one candidate")
    if len(candidates) != len(references):
        raise ValueError("candidates and references differ in length")
    matches = [0] * max_n
    totals = [0] * max_n
    c_len = r_len = 0
    for cand, refs in zip(candidates, references):
        c_len += len(cand)
        if refs:
            r_len += min((abs(len(r) - len(cand)), len(r)) for r in refs)[1]
        for n in range(1, max_n + 1):
            counts = ngrams(cand, n)
            ceiling = Counter()
            for ref in refs:
                ceiling |= ngrams(ref, n)
            matches[n - 1] += sum(min(c, ceiling[g]) for g, c in counts.items())
            totals[n - 1] += sum(counts.values())
    if c_len == 0:
        bp = 0.0
    elif c_len > r_len:
        bp = 1.0
    else:
        bp = math.exp(1.0 - r_len / c_len)
    bleu = []
    log_sum = 0.0
    for n in range(max_n):
        if matches[n] == 0 or log_sum == -math.inf:
            log_sum = -math.inf
            bleu.append(0.0)
            continue
        log_sum += math.log(matches[n] / totals[n])
        bleu.append(bp * math.exp(log_sum / (n + 1)))
    return BleuReport(bleu, bp, matches, totals, len(candidates), c_len, r_len)


# --- traces -----------------------------------------------------------------


def emit_trace(hypothesis, path, vocab=None):
    """One CSV row per generated token: step, token, g_t, alpha_0..alpha_{C-1}."""
    if not hypothesis.traces:
        raise ValueError("hypothesis carries no step traces")
    C = len(hypothesis.traces[0].alpha)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "token", "g_t"] + [f"alpha_{i}" for i in range(C)])
        for tok, tr in zip(hypothesis.tokens, hypothesis.traces):
            word = vocab.tokens[tok] if vocab is not None else tok
            writer.writerow([tr.t, word, repr(float(tr.g))] + [repr(float(a)) for a in tr.alpha])
