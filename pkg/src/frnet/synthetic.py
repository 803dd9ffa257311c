"""Frappe-shaped synthetic app-usage logs.

Same schema and cardinalities as the public Frappe context-aware app usage
data (10 categorical fields, 5,382 distinct features, one positive per two
negatives, 288,609 rows by default).

Users belong to taste groups that share two pools of apps, and every user
owns two small app sets drawn from those pools. Which set a user opens depends
on a user-specific context rule: some switch by home/work, some by time of
day, some by weekend. Each user lives in a handful of habitual situations
(context tuples), so the click signal is a three-way user x context x item
effect that pairwise models only approximate.

Negatives share the positive's user and context. Most are catalogue apps no
taste group uses; a fraction (``hard_negative_rate``) are the user's own
apps from the set that does not fit the context.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FIELDS = ["user", "item", "daytime", "weekday", "isweekend", "homework", "cost", "weather",
          "country", "city"]
CARDINALITY = {"user": 957, "item": 4082, "daytime": 7, "weekday": 7, "isweekend": 2,
               "homework": 3, "cost": 2, "weather": 9, "country": 80, "city": 233}
FRAPPE_ROWS = 288_609

POSITIVE, EASY_NEGATIVE, HARD_NEGATIVE = 0, 1, 2


@dataclass
class SyntheticConfig:
    rows: int = FRAPPE_ROWS
    groups: int = 50
    pool_size: int = 12
    apps_per_mode: int = 5
    hard_negative_rate: float = 0.12
    situations: int = 6  # habitual contexts per user; 0 draws a fresh context per log
    mode_noise: float = 0.0  # chance a positive comes from the off-context set
    seed: int = 0


def _zipf(rng, n, s=1.0, offset=5.0):
    w = 1.0 / (np.arange(n) + offset) ** s
    w = w[rng.permutation(n)]
    return w / w.sum()


def generate(cfg: SyntheticConfig = SyntheticConfig()):
    """Return ``(field_names, labels, tokens, kinds)``.

    ``tokens`` is an ``N x 10`` string array; ``kinds`` tags every row as
    ``POSITIVE``, ``EASY_NEGATIVE`` or ``HARD_NEGATIVE``.
    """
    rng = np.random.default_rng(cfg.seed)
    C = CARDINALITY
    n_pos = -(-cfg.rows // 3)
    n_users, n_items = C["user"], C["item"]
    if cfg.groups * 2 * cfg.pool_size >= n_items or cfg.apps_per_mode > cfg.pool_size:
        raise ValueError("app pools do not fit the catalogue")

    user_p = _zipf(rng, n_users, 0.8, 20.0)
    item_p = _zipf(rng, n_items, 1.0, 10.0)
    item_cost = (rng.random(n_items) < 0.2).astype(np.int64)

    # every user: a context rule, a home location, two app sets
    user_rule = rng.integers(0, 3, n_users)
    user_country = rng.choice(C["country"], n_users, p=_zipf(rng, C["country"], 1.2, 2.0))
    city_of_country = rng.integers(0, C["city"], (C["country"], 3))
    user_city = city_of_country[user_country, rng.integers(0, 3, n_users)]
    # taste groups own disjoint app pools; a user's sets come from their group's pools
    pools = rng.choice(n_items, (cfg.groups, 2, cfg.pool_size), replace=False, p=item_p)
    user_group = rng.choice(cfg.groups, n_users, p=_zipf(rng, cfg.groups, 0.5, 5.0))
    k = cfg.apps_per_mode
    apps = np.empty((n_users, 2, k), dtype=np.int64)
    for u in range(n_users):
        for m in range(2):
            apps[u, m] = rng.choice(pools[user_group[u], m], k, replace=False)
    within = _zipf(np.random.default_rng(cfg.seed + 1), k, 1.0, 1.0)
    tail = np.setdiff1d(np.arange(n_items), pools.ravel())

    def draw_context(who):
        n = len(who)
        weekday = rng.integers(0, 7, n)
        weekend = (weekday >= 5).astype(np.int64)
        daytime = rng.integers(0, 7, n)
        office_hours = (weekend == 0) & (daytime >= 1) & (daytime <= 4)
        homework = np.where(rng.random(n) < 0.15, 2, np.where(office_hours & (rng.random(n) < 0.8), 1, 0))
        weather = rng.integers(0, C["weather"], n)
        travel = rng.random(n) < 0.05
        country = np.where(travel, rng.integers(0, C["country"], n), user_country[who])
        city = np.where(travel, rng.integers(0, C["city"], n), user_city[who])
        return np.stack([daytime, weekday, weekend, homework, weather, country, city], axis=1)

    users = rng.choice(n_users, n_pos, p=user_p)
    if cfg.situations:
        S = cfg.situations
        habitual = draw_context(np.repeat(np.arange(n_users), S)).reshape(n_users, S, 7)
        ctx = habitual[users, rng.integers(0, S, n_pos)]
    else:
        ctx = draw_context(users)
    daytime, weekend, homework = ctx[:, 0], ctx[:, 2], ctx[:, 3]

    rule = user_rule[users]
    mode = np.select([rule == 0, rule == 1, rule == 2],
                     [homework == 1, daytime >= 4, weekend == 1]).astype(np.int64)
    flip = rng.random(n_pos) < cfg.mode_noise
    pos_item = apps[users, np.where(flip, 1 - mode, mode), rng.choice(k, n_pos, p=within)]

    neg_items, kinds = [], [np.full(n_pos, POSITIVE)]
    for _ in range(2):
        hard = rng.random(n_pos) < cfg.hard_negative_rate
        off_context = apps[users, 1 - mode, rng.integers(0, k, n_pos)]
        neg_items.append(np.where(hard, off_context, rng.choice(tail, n_pos)))
        kinds.append(np.where(hard, HARD_NEGATIVE, EASY_NEGATIVE))

    items = np.concatenate([pos_item, *neg_items])
    ctx = np.concatenate([ctx] * 3)
    all_users = np.concatenate([users] * 3)
    labels = np.concatenate([np.ones(n_pos), np.zeros(2 * n_pos)]).astype(np.int64)

    order = rng.permutation(len(labels))[:cfg.rows]
    cols = {
        "user": all_users, "item": items, "daytime": ctx[:, 0], "weekday": ctx[:, 1],
        "isweekend": ctx[:, 2], "homework": ctx[:, 3], "cost": item_cost[items],
        "weather": ctx[:, 4], "country": ctx[:, 5], "city": ctx[:, 6],
    }
    tokens = np.stack([np.char.add(name[:3], cols[name][order].astype(str)) for name in FIELDS], axis=1)
    return list(FIELDS), labels[order], tokens, np.concatenate(kinds)[order]


def write_csv(path: Path | str, cfg: SyntheticConfig = SyntheticConfig(), delimiter: str = ",") -> int:
    names, labels, tokens, _ = generate(cfg)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(["label", *names])
        for y, row in zip(labels, tokens):
            w.writerow([int(y), *row])
    return len(labels)
