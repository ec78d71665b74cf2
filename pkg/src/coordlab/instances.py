"""Shared instance batteries and the default invariant check suite.

The same generators feed the test suite and the ``check`` command, so a
failure reported by either names an instance the other can reproduce.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

from coordlab import coordination_code as cc
from coordlab import oracle as oc
from coordlab import prob_core as pc
from coordlab import region_solver as rs


def random_two_node_instances(count: int, seed: int, max_size: int = 3):
    """(p0, target) pairs with alphabet sizes in {2, ..., max_size}."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        kx = int(rng.integers(2, max_size + 1))
        ky = int(rng.integers(2, max_size + 1))
        p0 = pc.Pmf(rng.dirichlet(np.ones(kx) * 1.5))
        target = pc.CondPmf(rng.dirichlet(np.ones(ky) * 1.2, size=kx))
        out.append((p0, target))
    return out


def random_binary_instances(count: int, seed: int):
    return random_two_node_instances(count, seed, max_size=2)


def binary_battery_codes():
    """Every two-node code with n=1, binary alphabets, message rates 0 and 1."""
    codes = []
    for dec in itertools.product(range(2), repeat=2):  # two messages
        for enc in itertools.product(range(2), repeat=2):
            codes.append(
                cc.TableCode(
                    n=1,
                    x_size=2,
                    y_size=2,
                    rate1=1.0,
                    encoder=np.array(enc),
                    decoder_mid=np.array(dec).reshape(2, 1),
                )
            )
    for dec in range(2):  # single message
        codes.append(
            cc.TableCode(
                n=1,
                x_size=2,
                y_size=2,
                rate1=0.0,
                encoder=np.zeros(2, dtype=int),
                decoder_mid=np.array([[dec]]),
            )
        )
    return codes


def battery_targets(seed: int = 2026):
    """Joint (X, Y) targets used with the n=1 battery: corners plus noise."""
    rng = np.random.default_rng(seed)
    targets = [
        pc.JointPmf([[0.5, 0.0], [0.0, 0.5]]),
        pc.JointPmf([[0.25, 0.25], [0.25, 0.25]]),
        pc.JointPmf([[0.4, 0.1], [0.2, 0.3]]),
    ]
    for _ in range(5):
        targets.append(pc.JointPmf(rng.dirichlet(np.ones(4)).reshape(2, 2)))
    return targets


def battery_sources(seed: int = 2027):
    rng = np.random.default_rng(seed)
    sources = [pc.Pmf([0.5, 0.5]), pc.Pmf([0.9, 0.1])]
    for _ in range(3):
        sources.append(pc.Pmf(rng.dirichlet([2.0, 2.0])))
    return sources


# -- default check battery ----------------------------------------------


def _check_averaged_marginals():
    rng = np.random.default_rng(99)
    for trial in range(10):
        n = int(rng.integers(1, 4))
        a = int(rng.integers(2, 4))
        weights = rng.integers(1, 20, size=a**n)
        total = int(weights.sum())
        flat = np.array([Fraction(int(v), total) for v in weights], dtype=object)
        p_seq = flat.reshape((a,) * n)
        brute = pc.expected_type_bruteforce(p_seq)
        margs = pc.coordinate_marginals(p_seq)
        avg = sum(margs) / n
        if any(brute[i] != avg[i] for i in range(a)):
            return False, f"trial {trial}: n={n} alphabet={a} weights={weights.tolist()}"
    return True, "expected type equals averaged per-coordinate marginals (exact)"


def _check_tv_axioms():
    rng = np.random.default_rng(7)
    for trial in range(200):
        k = int(rng.integers(2, 6))
        p, q, r = (pc.Pmf(rng.dirichlet(np.ones(k))) for _ in range(3))
        lam = float(rng.random())
        tv_pq = pc.total_variation(p, q)
        checks = [
            abs(tv_pq - pc.total_variation(q, p)) <= 1e-12,
            -1e-12 <= tv_pq <= 1.0 + 1e-12,
            pc.total_variation(p, r) <= tv_pq + pc.total_variation(q, r) + 1e-12,
            pc.total_variation(
                pc.Pmf(lam * p.mass + (1 - lam) * q.mass), r
            )
            <= lam * pc.total_variation(p, r)
            + (1 - lam) * pc.total_variation(q, r)
            + 1e-12,
        ]
        if not all(checks):
            return False, f"trial {trial}: p={p.mass} q={q.mass} r={r.mass}"
    return True, "symmetry, range, triangle, convexity on 200 random triples"


def _check_chain_inequality():
    for code in binary_battery_codes():
        for p0 in battery_sources():
            for p in battery_targets():
                for q in battery_targets():
                    lhs = cc.expected_tv_exact(code, p0, p)
                    rhs = cc.expected_tv_exact(code, p0, q) + pc.total_variation(q, p)
                    if lhs > rhs + 1e-12:
                        return False, (
                            f"code enc={code.encoder.tolist()} "
                            f"dec={code.decoder_mid.tolist()} p0={p0.mass.tolist()}"
                        )
    return True, "E(TV to p) <= E(TV to q) + TV(q, p) on the n=1 battery"


def _check_jensen_step():
    for code in binary_battery_codes():
        for p0 in battery_sources():
            for target in battery_targets():
                lhs = cc.expected_tv_exact(code, p0, target)
                mean_type = cc.expected_type_of_code(code, p0)
                rhs = pc.total_variation(mean_type, target)
                if lhs < rhs - 1e-12:
                    return False, (
                        f"code enc={code.encoder.tolist()} "
                        f"dec={code.decoder_mid.tolist()} p0={p0.mass.tolist()}"
                    )
    return True, "E(TV(type, target)) >= TV(E(type), target) on the n=1 battery"


def _check_solver_endpoints():
    cfg = rs.SolverConfig()
    for i, (p0, target) in enumerate(random_two_node_instances(3, seed=1234)):
        joint = pc.compose(p0, target)
        point = rs.solve_two_node(p0, target, 0.0, cfg)
        if abs(point.R1 - pc.mutual_information(joint)) > 1e-6:
            return False, f"instance {i}: R(0) {point.R1} vs I {pc.mutual_information(joint)}"
        ds = rs.delta_star(p0, target)
        point = rs.solve_two_node(p0, target, ds, cfg)
        if point.R1 > 1e-6:
            return False, f"instance {i}: R(delta*) = {point.R1}"
    return True, "R(0) = I and R(delta*) = 0 on random instances"


def _check_solver_vs_grid():
    p0 = pc.Pmf([0.5, 0.5])
    target = pc.CondPmf(np.eye(2))
    point = rs.solve_two_node(p0, target, 0.1)
    rep = oc.grid_min_mi(p0, target, 0.1, 1e-3)
    if abs(point.R1 - rep.optimum) > 1e-3:
        return False, f"solver {point.R1} vs grid {rep.optimum}"
    return True, "solver matches the dense-grid oracle on the identity instance"


def _check_block_repetition():
    code = binary_battery_codes()[1]
    for k in (1, 2, 4):
        rep = cc.block_repeat(code, k)
        if rep.rate1 != code.rate1 or rep.n != k * code.n:
            return False, f"k={k}: rate {rep.rate1} blocklength {rep.n}"
        x = np.arange(k) % 2
        rows = rep.decoded_rows(x[None, :])[0]
        base_rows = code.decoded_rows(x[:, None])[0]
        if not np.array_equal(rows.reshape(k, 1), base_rows):
            return False, f"k={k}: per-block decoding mismatch"
    return True, "block repetition preserves rates and factors per block"


def _check_expectation_bound():
    p0 = pc.Pmf([0.3, 0.7])
    target = battery_targets()[0]
    for code in binary_battery_codes()[:6]:
        exact = cc.expected_tv_exact(code, p0, target)
        dist = cc.induced_distribution(code, p0)
        for t in (0.0, 0.25, 0.5):
            exceed = 0.0
            for (x, y), prob in dist.items():
                tv = pc.total_variation(
                    pc.joint_type([x, y], (2, 2)), target
                )
                if tv > t:
                    exceed += prob
            if exact > exceed + t + 1e-12:
                return False, f"t={t} code enc={code.encoder.tolist()}"
    return True, "E(TV) <= Pr(TV > t) + t by enumeration"


def _check_source_marginal():
    rng = np.random.default_rng(3)
    p0 = pc.Pmf(rng.dirichlet([2, 2]))
    code = cc.build_codebook_code(p0, pc.CondPmf(np.eye(2)), n=3, rate1=0.7, seed=5)
    dist = cc.induced_distribution(code, p0)
    marg = {}
    for (x, *_rest), prob in dist.items():
        marg[x] = marg.get(x, 0.0) + prob
    for x_tuple, prob in marg.items():
        want = float(np.prod([p0.mass[s] for s in x_tuple]))
        if abs(prob - want) > 1e-12:
            return False, f"x={x_tuple}: {prob} vs {want}"
    return True, "induced distribution preserves the product source marginal"


def _check_serialization():
    code = binary_battery_codes()[3]
    doc = cc.code_to_json_dict(code)
    back = cc.code_from_json_dict(doc)
    x = np.array([[0], [1]])
    if not np.array_equal(code.decoded_rows(x)[0], back.decoded_rows(x)[0]):
        return False, "decoded rows changed after JSON round-trip"
    return True, "code JSON round-trip reproduces behavior"


def default_battery():
    return [
        ("averaged_marginals_exact", _check_averaged_marginals),
        ("tv_axioms", _check_tv_axioms),
        ("achievability_chain", _check_chain_inequality),
        ("jensen_step", _check_jensen_step),
        ("solver_endpoints", _check_solver_endpoints),
        ("solver_vs_grid_oracle", _check_solver_vs_grid),
        ("block_repetition", _check_block_repetition),
        ("expectation_bound", _check_expectation_bound),
        ("source_marginal", _check_source_marginal),
        ("code_serialization", _check_serialization),
    ]
