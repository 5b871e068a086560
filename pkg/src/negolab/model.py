"""Recurrent act policy: a small GRU over dialogue acts with masked heads.

The action space is flat: one id per (kind, allocation) pair laid out for the
maximal item counts — 125 proposals, 125 insists, agree, disagree, end — and
a legality mask per context zeroes the ids that do not apply. Proposal logits
share a bilinear feature head (claim size, claim value, leftover value), so
value-sensitivity generalizes across the 250 allocation ids.

Selection is predicted by three per-item categorical heads over own-claim
counts, overridden by the deal on the table when one exists.

All math is plain float64 numpy with hand-written backprop; gradients are
validated against central finite differences in the test suite.
"""

from __future__ import annotations

import hashlib
import json
import zipfile
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import env
from .corpus import PerspectiveExample
from .env import ActKind, Allocation, Context, DialogueAct, ItemCounts

MODEL_FORMAT_VERSION = 1

# ---------------------------------------------------------------------------
# Action vocabulary
# ---------------------------------------------------------------------------

MAX_COUNTS = ItemCounts(env.MAX_ITEM_COUNT, env.MAX_ITEM_COUNT, env.MAX_ITEM_COUNT)
VOCAB_ALLOCS: tuple[Allocation, ...] = tuple(env.enumerate_allocations(MAX_COUNTS))
N_ALLOCS = len(VOCAB_ALLOCS)  # 125
AGREE_ID = 2 * N_ALLOCS
DISAGREE_ID = AGREE_ID + 1
END_ID = AGREE_ID + 2
VOCAB_SIZE = END_ID + 1  # 253

_ALLOC_SLOT = {alloc: i for i, alloc in enumerate(VOCAB_ALLOCS)}

KIND_ORDER = (ActKind.PROPOSE, ActKind.INSIST, ActKind.AGREE, ActKind.DISAGREE, ActKind.END)
KIND_INDEX = {k: i for i, k in enumerate(KIND_ORDER)}
BOS_KIND = len(KIND_ORDER)  # input-only token
N_KINDS = len(KIND_ORDER)

N_FEATURES = 6  # input side: claim fractions (3), claim value, leftover value, item share
N_HEAD_FEATURES = 4  # head side: claim fractions (3), item share — geometry only


def act_to_id(act: DialogueAct) -> int:
    if act.kind is ActKind.PROPOSE:
        return _ALLOC_SLOT[act.allocation]
    if act.kind is ActKind.INSIST:
        return N_ALLOCS + _ALLOC_SLOT[act.allocation]
    if act.kind is ActKind.AGREE:
        return AGREE_ID
    if act.kind is ActKind.DISAGREE:
        return DISAGREE_ID
    return END_ID


def id_to_act(action_id: int) -> DialogueAct:
    if action_id < N_ALLOCS:
        return DialogueAct(ActKind.PROPOSE, VOCAB_ALLOCS[action_id])
    if action_id < 2 * N_ALLOCS:
        return DialogueAct(ActKind.INSIST, VOCAB_ALLOCS[action_id - N_ALLOCS])
    if action_id == AGREE_ID:
        return env.AGREE
    if action_id == DISAGREE_ID:
        return env.DISAGREE
    if action_id == END_ID:
        return env.END
    raise ValueError(f"action id {action_id} out of range")


def vocab_hash() -> str:
    text = ";".join(f"{i}:{id_to_act(i).kind.value}:{id_to_act(i).allocation}" for i in range(VOCAB_SIZE))
    return hashlib.sha1(text.encode()).hexdigest()[:16]


_mask_cache: dict[tuple[ItemCounts, bool], np.ndarray] = {}


def legal_mask(counts: ItemCounts, has_proposal: bool) -> np.ndarray:
    """Boolean (VOCAB_SIZE,) mask of legal next acts for this state."""
    key = (counts, has_proposal)
    cached = _mask_cache.get(key)
    if cached is None:
        fits = np.array(
            [all(a <= c for a, c in zip(alloc, counts)) for alloc in VOCAB_ALLOCS], dtype=bool
        )
        mask = np.concatenate([fits, fits, [has_proposal, True, True]])
        mask.setflags(write=False)
        _mask_cache[key] = cached = mask
    return cached


_feature_cache: dict[tuple[ItemCounts, env.Utilities], np.ndarray] = {}


def allocation_features(context: Context) -> np.ndarray:
    """(N_ALLOCS, N_FEATURES) input-embedding features per vocabulary allocation.

    Value and leftover columns use the viewing agent's own utilities, so a
    consumed proposal carries "what this claim is worth to me" and "what the
    rest is worth to me". Rows outside the context's counts are never used.
    """
    key = (context.counts, context.utilities)
    cached = _feature_cache.get(key)
    if cached is None:
        counts = np.array(context.counts, dtype=float)
        utils = np.array(context.utilities, dtype=float)
        allocs = np.array(VOCAB_ALLOCS, dtype=float)
        value = allocs @ utils
        leftover = (counts - allocs) @ utils
        feats = np.column_stack(
            [
                allocs / env.MAX_ITEM_COUNT,
                value / env.TOTAL_POINTS,
                leftover / env.TOTAL_POINTS,
                allocs.sum(axis=1) / counts.sum(),
            ]
        )
        feats.setflags(write=False)
        _feature_cache[key] = cached = feats
    return cached


_head_feature_cache: dict[ItemCounts, np.ndarray] = {}


def head_features(counts: ItemCounts) -> np.ndarray:
    """(N_ALLOCS, N_HEAD_FEATURES) purely geometric rows for the proposal head.

    Deliberately utility-blind: proposing well requires the recurrent state
    to interact with the claim pattern, which keeps learned proposals coarse.
    """
    cached = _head_feature_cache.get(counts)
    if cached is None:
        counts_arr = np.array(counts, dtype=float)
        allocs = np.array(VOCAB_ALLOCS, dtype=float)
        feats = np.column_stack(
            [allocs / env.MAX_ITEM_COUNT, allocs.sum(axis=1) / counts_arr.sum()]
        )
        feats.setflags(write=False)
        _head_feature_cache[counts] = cached = feats
    return cached


def context_features(context: Context) -> np.ndarray:
    return np.concatenate(
        [
            np.array(context.counts, dtype=float) / env.MAX_ITEM_COUNT,
            np.array(context.utilities, dtype=float) / env.TOTAL_POINTS,
        ]
    )


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

EMBED_DIM = 8
CTX_DIM = 10
SELECTION_CLASSES = env.MAX_ITEM_COUNT + 1  # own claim per item: 0..4


N_STATE_FLAGS = 4  # who spoke, who speaks next, proposal exists, deal standing


def _input_dim() -> int:
    return EMBED_DIM + N_FEATURES + N_STATE_FLAGS + CTX_DIM


def _param_shapes(hidden: int) -> dict[str, tuple[int, ...]]:
    d = _input_dim()
    shapes: dict[str, tuple[int, ...]] = {
        "emb_kind": (N_KINDS + 1, EMBED_DIM),
        "ctx_w": (CTX_DIM, 6),
        "ctx_b": (CTX_DIM,),
        "u_kind": (N_KINDS, hidden),
        "b_kind": (N_KINDS,),
        "b_alloc": (N_ALLOCS,),
        "w_feat": (N_HEAD_FEATURES, hidden),
        "sel_w": (3, SELECTION_CLASSES, hidden),
        "sel_b": (3, SELECTION_CLASSES),
    }
    for gate in ("z", "r", "c"):
        shapes[f"w_{gate}"] = (hidden, d)
        shapes[f"u_{gate}"] = (hidden, hidden)
        shapes[f"b_{gate}"] = (hidden,)
    return shapes


@dataclass
class PolicyModel:
    hidden: int
    params: dict[str, np.ndarray]
    momentum: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.momentum:
            self.momentum = {k: np.zeros_like(v) for k, v in self.params.items()}

    def clone(self) -> "PolicyModel":
        return PolicyModel(
            hidden=self.hidden,
            params={k: v.copy() for k, v in self.params.items()},
            momentum={k: v.copy() for k, v in self.momentum.items()},
        )

    def params_equal(self, other: "PolicyModel") -> bool:
        return self.hidden == other.hidden and all(
            np.array_equal(self.params[k], other.params[k]) for k in self.params
        )


def init_model(rng: np.random.Generator, hidden: int = 64, init_scale: float = 0.1) -> PolicyModel:
    """Parameters uniform in [-init_scale, +init_scale]; optimizer state zeroed."""
    if hidden <= 0:
        raise ValueError("hidden width must be positive")
    params = {
        name: rng.uniform(-init_scale, init_scale, size=shape)
        for name, shape in _param_shapes(hidden).items()
    }
    return PolicyModel(hidden=hidden, params=params)


# ---------------------------------------------------------------------------
# Forward pieces
# ---------------------------------------------------------------------------


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def _encode_context(params: dict[str, np.ndarray], feats6: np.ndarray) -> np.ndarray:
    return np.tanh(feats6 @ params["ctx_w"].T + params["ctx_b"])


def _gru_step(params, x: np.ndarray, h: np.ndarray):
    """One GRU update; works for (H,) vectors and (B, H) batches alike."""
    z = _sigmoid(x @ params["w_z"].T + h @ params["u_z"].T + params["b_z"])
    r = _sigmoid(x @ params["w_r"].T + h @ params["u_r"].T + params["b_r"])
    c = np.tanh(x @ params["w_c"].T + (r * h) @ params["u_c"].T + params["b_c"])
    h_new = (1.0 - z) * h + z * c
    return h_new, (x, h, z, r, c)


def _act_logits(params, h: np.ndarray, feats: np.ndarray) -> np.ndarray:
    """Masked-ready logits: proposals share the bilinear feature term plus a
    per-allocation bias (which lets training single out exact claims)."""
    kind_logits = h @ params["u_kind"].T + params["b_kind"]
    g = h @ params["w_feat"].T  # (..., F)
    prop_vals = np.einsum("...af,...f->...a", feats, g) + params["b_alloc"]
    parts = [
        prop_vals + kind_logits[..., 0:1],
        prop_vals + kind_logits[..., 1:2],
        kind_logits[..., 2:5],
    ]
    return np.concatenate(parts, axis=-1)


def masked_distribution(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Renormalized probabilities with exact zeros on masked ids."""
    neg = np.where(mask, logits, -np.inf)
    m = neg.max(axis=-1, keepdims=True)
    e = np.exp(neg - m)
    e = np.where(mask, e, 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def _input_vector(params, kind_idx: int, feat_row: np.ndarray, flags, e_c: np.ndarray) -> np.ndarray:
    return np.concatenate([params["emb_kind"][kind_idx], feat_row, flags, e_c])


# ---------------------------------------------------------------------------
# Incremental decoding session (rollouts, arena)
# ---------------------------------------------------------------------------


class Session:
    """Stateful view of one dialogue from one seat; feed acts, query the policy."""

    def __init__(self, model: PolicyModel, context: Context, self_starts: bool):
        self.model = model
        self.context = context
        self.feats = allocation_features(context)
        self.feats_head = head_features(context.counts)
        self.e_c = _encode_context(model.params, context_features(context))
        self.h = np.zeros(model.hidden)
        self.has_proposal = False
        self.deal_standing = False
        bos_feat = np.zeros(N_FEATURES)
        flags = (0.0, 1.0 if self_starts else -1.0, 0.0, 0.0)
        x = _input_vector(model.params, BOS_KIND, bos_feat, flags, self.e_c)
        self.h, _ = _gru_step(model.params, x, self.h)

    def observe(self, act: DialogueAct, own: bool) -> None:
        feat = self._act_feature(act)
        if act.kind in env.PROPOSAL_KINDS:
            self.has_proposal = True
            self.deal_standing = False
        elif act.kind is ActKind.AGREE and self.has_proposal:
            self.deal_standing = True
        who_prev = 1.0 if own else -1.0
        flags = (who_prev, -who_prev, float(self.has_proposal), float(self.deal_standing))
        x = _input_vector(self.model.params, KIND_INDEX[act.kind], feat, flags, self.e_c)
        self.h, _ = _gru_step(self.model.params, x, self.h)

    def _act_feature(self, act: DialogueAct) -> np.ndarray:
        if act.allocation is None:
            return np.zeros(N_FEATURES)
        return self.feats[_ALLOC_SLOT[act.allocation]]

    def mask(self) -> np.ndarray:
        return legal_mask(self.context.counts, self.has_proposal)

    def distribution(self) -> np.ndarray:
        logits = _act_logits(self.model.params, self.h, self.feats_head)
        return masked_distribution(logits, self.mask())

    def selection_logits(self) -> np.ndarray:
        return np.einsum("jch,h->jc", self.model.params["sel_w"], self.h) + self.model.params["sel_b"]


def _replay_session(model: PolicyModel, view: PerspectiveExample) -> Session:
    session = Session(model, view.context, self_starts=view_starter_is_own(view))
    for is_own, act in view.acts:
        session.observe(act, is_own)
    return session


def view_starter_is_own(view: PerspectiveExample) -> bool:
    if view.starts_own is not None:
        return view.starts_own
    return view.acts[0][0] if view.acts else True


# ---------------------------------------------------------------------------
# Spec-facing forward operations
# ---------------------------------------------------------------------------


def act_distribution(model: PolicyModel, view: PerspectiveExample) -> np.ndarray:
    """Masked, renormalized categorical over the next act after ``view.acts``."""
    session = _replay_session(model, view)
    probs = session.distribution()
    if not np.isfinite(probs).all():
        raise FloatingPointError("act distribution is not finite")
    return probs


def sample_act(
    model: PolicyModel, view: PerspectiveExample, rng: np.random.Generator
) -> tuple[DialogueAct, float]:
    probs = act_distribution(model, view)
    action_id = int(rng.choice(VOCAB_SIZE, p=probs))
    return id_to_act(action_id), float(np.log(probs[action_id]))


def act_log_prob(model: PolicyModel, view: PerspectiveExample, act: DialogueAct) -> float:
    probs = act_distribution(model, view)
    action_id = act_to_id(act)
    if probs[action_id] == 0.0:
        raise env.IllegalActError("masked-act", f"{act} has zero probability here")
    return min(0.0, float(np.log(probs[action_id])))


def predict_selection(model: PolicyModel, view: PerspectiveExample) -> Allocation:
    """Own final share: honor the standing deal, else argmax of the heads.

    Head argmaxes are clamped componentwise to the item counts.
    """
    deal = _view_standing_agreement(view)
    counts = view.counts
    if deal is not None:
        own_proposed, claim = deal
        if own_proposed:
            return claim
        return Allocation(*(c - x for c, x in zip(counts, claim)))
    session = _replay_session(model, view)
    logits = session.selection_logits()
    picks = logits.argmax(axis=1)
    return Allocation(*(min(int(p), c) for p, c in zip(picks, counts)))


def _view_standing_agreement(view: PerspectiveExample) -> Optional[tuple[bool, Allocation]]:
    last: Optional[tuple[bool, Allocation]] = None
    agreed = False
    for is_own, act in view.acts:
        if act.kind in env.PROPOSAL_KINDS:
            assert act.allocation is not None
            last = (is_own, act.allocation)
            agreed = False
        elif act.kind is ActKind.AGREE and last is not None:
            agreed = True
    return last if agreed else None


@dataclass
class PositionStats:
    """Per-act forward quantities of one dialogue under one model."""

    is_own: np.ndarray  # bool (T,) — actor of each act
    log_prob: np.ndarray  # (T,) log prob of the realized act
    entropy: np.ndarray  # (T,) entropy of the pre-act distribution
    margin: np.ndarray  # (T,) top1 - top2 probability (NaN if < 2 legal acts)


def position_stats(model: PolicyModel, view: PerspectiveExample) -> PositionStats:
    """One forward pass scoring every position of a finished dialogue."""
    first_own = view_starter_is_own(view)
    session = Session(model, view.context, self_starts=first_own)
    T = len(view.acts)
    is_own = np.zeros(T, dtype=bool)
    log_prob = np.zeros(T)
    entropy = np.zeros(T)
    margin = np.zeros(T)
    for j, (own, act) in enumerate(view.acts):
        probs = session.distribution()
        mask = session.mask()
        pid = act_to_id(act)
        is_own[j] = own
        log_prob[j] = min(0.0, float(np.log(max(probs[pid], 1e-300))))
        live = probs[probs > 0]
        entropy[j] = float(-(live * np.log(live)).sum())
        if int(mask.sum()) >= 2:
            top2 = np.partition(probs[mask], -2)[-2:]
            margin[j] = float(top2[1] - top2[0])
        else:
            margin[j] = np.nan
        session.observe(act, own)
    return PositionStats(is_own=is_own, log_prob=log_prob, entropy=entropy, margin=margin)


# ---------------------------------------------------------------------------
# Batched loss + gradients (BPTT)
# ---------------------------------------------------------------------------


@dataclass
class SequenceBatch:
    """Padded tensors for a batch of perspectives ready for BPTT.

    Steps run 0..T: step 0 consumes a BOS marker, step k>0 consumes act k.
    The state after step k predicts act k+1 (weight 0 where padded or
    unweighted) and the final state of each example feeds the selection heads.
    """

    examples: list[PerspectiveExample]
    kind_ids: np.ndarray  # (S, B) int — consumed token kind (BOS first)
    feats_in: np.ndarray  # (S, B, F)
    who: np.ndarray  # (S, B, N_STATE_FLAGS)
    active: np.ndarray  # (S, B) bool — step consumes a real token
    ctx6: np.ndarray  # (B, 6)
    alloc_feats: np.ndarray  # (B, N_ALLOCS, N_HEAD_FEATURES) head-side geometry
    masks: np.ndarray  # (S, B, V) bool legality for the act predicted at each state
    targets: np.ndarray  # (S, B) int act id predicted from state after step s (-1 = none)
    act_weights: np.ndarray  # (S, B)
    sel_targets: np.ndarray  # (B, 3) int, -1 = no selection loss
    final_step: np.ndarray  # (B,) index of each example's last state
    sel_weight: float


def build_batch(
    examples: Sequence[PerspectiveExample],
    act_weights: Optional[Sequence[np.ndarray]] = None,
    sel_weight: float = 0.0,
) -> SequenceBatch:
    """Assemble padded training tensors.

    ``act_weights[i][j]`` weights the NLL of example i's act j (defaults to
    1 everywhere). ``sel_weight`` > 0 adds the selection NLL of examples
    whose target is set.
    """
    B = len(examples)
    T = max(len(e.acts) for e in examples) if examples else 0
    S = T + 1
    kind_ids = np.full((S, B), BOS_KIND, dtype=int)
    feats_in = np.zeros((S, B, N_FEATURES))
    who = np.zeros((S, B, N_STATE_FLAGS))
    active = np.zeros((S, B), dtype=bool)
    ctx6 = np.zeros((B, 6))
    alloc_feats = np.zeros((B, N_ALLOCS, N_HEAD_FEATURES))
    masks = np.zeros((S, B, VOCAB_SIZE), dtype=bool)
    targets = np.full((S, B), -1, dtype=int)
    weights = np.zeros((S, B))
    sel_targets = np.full((B, 3), -1, dtype=int)
    final_step = np.zeros(B, dtype=int)

    for i, ex in enumerate(examples):
        ctx6[i] = context_features(ex.context)
        feats = allocation_features(ex.context)
        alloc_feats[i] = head_features(ex.counts)
        first_own = view_starter_is_own(ex)
        active[0, i] = True
        who[0, i] = (0.0, 1.0 if first_own else -1.0, 0.0, 0.0)
        has_prop = False
        deal = False
        w = None if act_weights is None else act_weights[i]
        for j, (own, act) in enumerate(ex.acts):
            masks[j, i] = legal_mask(ex.counts, has_prop)
            targets[j, i] = act_to_id(act)
            weights[j, i] = 1.0 if w is None else w[j]
            step = j + 1
            kind_ids[step, i] = KIND_INDEX[act.kind]
            if act.allocation is not None:
                feats_in[step, i] = feats[_ALLOC_SLOT[act.allocation]]
                has_prop = True
                deal = False
            elif act.kind is ActKind.AGREE and has_prop:
                deal = True
            who_prev = 1.0 if own else -1.0
            who[step, i] = (who_prev, -who_prev, float(has_prop), float(deal))
            active[step, i] = True
        final_step[i] = len(ex.acts)
        if sel_weight > 0.0 and ex.target is not None:
            sel_targets[i] = ex.target
    return SequenceBatch(
        examples=list(examples),
        kind_ids=kind_ids,
        feats_in=feats_in,
        who=who,
        active=active,
        ctx6=ctx6,
        alloc_feats=alloc_feats,
        masks=masks,
        targets=targets,
        act_weights=weights,
        sel_targets=sel_targets,
        final_step=final_step,
        sel_weight=sel_weight,
    )


def _batch_logits(params, h: np.ndarray, alloc_feats: np.ndarray) -> np.ndarray:
    kind_logits = h @ params["u_kind"].T + params["b_kind"]  # (B, 5)
    g = h @ params["w_feat"].T  # (B, F)
    prop_vals = np.einsum("baf,bf->ba", alloc_feats, g) + params["b_alloc"]  # (B, A)
    return np.concatenate(
        [prop_vals + kind_logits[:, 0:1], prop_vals + kind_logits[:, 1:2], kind_logits[:, 2:5]],
        axis=1,
    )


def loss_and_grads(model: PolicyModel, batch: SequenceBatch) -> tuple[float, dict[str, np.ndarray]]:
    """Weighted act NLL plus optional selection NLL, averaged over the batch,
    with gradients for every parameter (backprop through time)."""
    params = model.params
    S, B = batch.kind_ids.shape
    H = model.hidden
    scale = 1.0 / max(B, 1)

    e_c_pre = batch.ctx6 @ params["ctx_w"].T + params["ctx_b"]
    e_c = np.tanh(e_c_pre)

    xs = np.concatenate(
        [params["emb_kind"][batch.kind_ids], batch.feats_in, batch.who, np.broadcast_to(e_c, (S, B, CTX_DIM))],
        axis=2,
    )

    hs = np.zeros((S + 1, B, H))
    caches = []
    loss = 0.0
    dlogits_steps: list[Optional[np.ndarray]] = []
    sel_cache = None

    for s in range(S):
        h_new, cache = _gru_step(params, xs[s], hs[s])
        act_rows = batch.active[s]
        h_next = np.where(act_rows[:, None], h_new, hs[s])
        hs[s + 1] = h_next
        caches.append(cache)

        rows = batch.targets[s] >= 0
        if rows.any():
            idx = np.flatnonzero(rows)
            logits = _batch_logits(params, h_next[idx], batch.alloc_feats[idx])
            mask = batch.masks[s, idx]
            neg = np.where(mask, logits, -np.inf)
            m = neg.max(axis=1, keepdims=True)
            ex = np.where(mask, np.exp(neg - m), 0.0)
            denom = ex.sum(axis=1, keepdims=True)
            p = ex / denom
            tgt = batch.targets[s, idx]
            w = batch.act_weights[s, idx]
            logp = np.log(p[np.arange(len(idx)), tgt])
            loss += float(-(w * logp).sum()) * scale
            dl = p * w[:, None]
            dl[np.arange(len(idx)), tgt] -= w
            dlogits_steps.append(dl)
        else:
            dlogits_steps.append(None)

    # selection heads at each example's final state
    if batch.sel_weight > 0.0:
        rows = np.flatnonzero(batch.sel_targets[:, 0] >= 0)
        if rows.size:
            h_fin = hs[batch.final_step[rows] + 1, rows]
            logits = np.einsum("jch,bh->bjc", params["sel_w"], h_fin) + params["sel_b"]
            m = logits.max(axis=2, keepdims=True)
            ex = np.exp(logits - m)
            p = ex / ex.sum(axis=2, keepdims=True)
            tgt = batch.sel_targets[rows]
            bi = np.arange(rows.size)[:, None]
            ji = np.arange(3)[None, :]
            logp = np.log(p[bi, ji, tgt])
            loss += float(-batch.sel_weight * logp.sum()) * scale
            dsel = p.copy()
            dsel[bi, ji, tgt] -= 1.0
            dsel *= batch.sel_weight
            sel_cache = (rows, h_fin, dsel)

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    dh_next = np.zeros((B, H))
    de_c = np.zeros((B, CTX_DIM))

    if sel_cache is not None:
        rows, h_fin, dsel = sel_cache
        grads["sel_w"] += np.einsum("bjc,bh->jch", dsel, h_fin) * scale
        grads["sel_b"] += dsel.sum(axis=0) * scale
        dh_sel = np.einsum("bjc,jch->bh", dsel, params["sel_w"]) * scale
        # scatter into the running dh at each example's final step during the
        # reverse sweep below
        sel_dh = np.zeros((S, B, H))
        sel_dh[batch.final_step[rows], rows] = dh_sel
    else:
        sel_dh = None

    for s in reversed(range(S)):
        dh = dh_next.copy()
        if sel_dh is not None:
            dh += sel_dh[s]
        dl = dlogits_steps[s]
        if dl is not None:
            idx = np.flatnonzero(batch.targets[s] >= 0)
            dl = dl * scale
            dkind = np.zeros((len(idx), N_KINDS))
            dkind[:, 0] = dl[:, :N_ALLOCS].sum(axis=1)
            dkind[:, 1] = dl[:, N_ALLOCS : 2 * N_ALLOCS].sum(axis=1)
            dkind[:, 2:] = dl[:, AGREE_ID:]
            dprop = dl[:, :N_ALLOCS] + dl[:, N_ALLOCS : 2 * N_ALLOCS]
            h_here = hs[s + 1][idx]
            grads["u_kind"] += dkind.T @ h_here
            grads["b_kind"] += dkind.sum(axis=0)
            grads["b_alloc"] += dprop.sum(axis=0)
            dg = np.einsum("ba,baf->bf", dprop, batch.alloc_feats[idx])
            grads["w_feat"] += dg.T @ h_here
            dh_rows = dkind @ params["u_kind"] + dg @ params["w_feat"]
            dh[idx] += dh_rows

        x, h_prev, z, r, c = caches[s]
        act_rows = batch.active[s][:, None]
        dh_act = np.where(act_rows, dh, 0.0)

        dz = dh_act * (c - h_prev)
        dc = dh_act * z
        dh_prev = dh_act * (1.0 - z) + np.where(act_rows, 0.0, dh)

        da_c = dc * (1.0 - c * c)
        rh = r * h_prev
        grads["w_c"] += da_c.T @ x
        grads["u_c"] += da_c.T @ rh
        grads["b_c"] += da_c.sum(axis=0)
        drh = da_c @ params["u_c"]
        dr = drh * h_prev
        dh_prev += drh * r

        da_r = dr * r * (1.0 - r)
        grads["w_r"] += da_r.T @ x
        grads["u_r"] += da_r.T @ h_prev
        grads["b_r"] += da_r.sum(axis=0)
        dh_prev += da_r @ params["u_r"]

        da_z = dz * z * (1.0 - z)
        grads["w_z"] += da_z.T @ x
        grads["u_z"] += da_z.T @ h_prev
        grads["b_z"] += da_z.sum(axis=0)
        dh_prev += da_z @ params["u_z"]

        dx = da_z @ params["w_z"] + da_r @ params["w_r"] + da_c @ params["w_c"]
        np.add.at(grads["emb_kind"], batch.kind_ids[s], dx[:, :EMBED_DIM])
        de_c += dx[:, EMBED_DIM + N_FEATURES + N_STATE_FLAGS :]
        dh_next = dh_prev

    dpre = de_c * (1.0 - e_c * e_c)
    grads["ctx_w"] += dpre.T @ batch.ctx6
    grads["ctx_b"] += dpre.sum(axis=0)

    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient in parameter block '{name}'")
    return loss, grads


def global_grad_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))


def apply_gradients(
    model: PolicyModel,
    grads: dict[str, np.ndarray],
    lr: float,
    clip_norm: float = 1.0,
    momentum: float = 0.9,
) -> None:
    """SGD with momentum and global-norm clipping; mutates the model in place."""
    norm = global_grad_norm(grads)
    factor = clip_norm / norm if clip_norm > 0 and norm > clip_norm else 1.0
    for name, g in grads.items():
        v = model.momentum[name]
        v *= momentum
        v += g * factor
        model.params[name] -= lr * v


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def save_model(model: PolicyModel, path) -> None:
    meta = {
        "version": MODEL_FORMAT_VERSION,
        "hidden": model.hidden,
        "vocab_hash": vocab_hash(),
        "param_order": sorted(model.params),
    }
    arrays = {f"param_{k}": v for k, v in model.params.items()}
    arrays.update({f"mom_{k}": v for k, v in model.momentum.items()})
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path) -> PolicyModel:
    try:
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            if meta["version"] != MODEL_FORMAT_VERSION:
                raise ValueError(f"unsupported model format version {meta['version']}")
            if meta["vocab_hash"] != vocab_hash():
                raise ValueError("model was saved with a different action vocabulary")
            hidden = int(meta["hidden"])
            shapes = _param_shapes(hidden)
            params = {}
            momentum = {}
            for name in meta["param_order"]:
                arr = data[f"param_{name}"]
                if name not in shapes or arr.shape != shapes[name]:
                    raise ValueError(f"parameter '{name}' has unexpected shape {arr.shape}")
                params[name] = arr.copy()
                momentum[name] = data[f"mom_{name}"].copy()
    except (OSError, KeyError, json.JSONDecodeError, ValueError, zipfile.BadZipFile) as exc:
        raise ValueError(f"cannot load model from {path}: {exc}") from exc
    return PolicyModel(hidden=hidden, params=params, momentum=momentum)
