"""Smoke test for the Python bindings.

Build and install first:
    pip install --no-build-isolation ./crates/py
"""

import math
import sys

import robust_recovery as rr


def check(cond, what):
    if not cond:
        sys.exit(f"FAIL: {what}")
    print(f"ok: {what}")


def main():
    check(abs(rr.lambda_general(100) - 1 / math.sqrt(math.log(100))) < 1e-15, "lambda_general")
    check(rr.stability_constant(0.0) == 4 * math.sqrt(13), "stability_constant at 0")
    try:
        rr.stability_constant(0.2)
        check(False, "delta >= 1/9 rejected")
    except ValueError:
        check(True, "delta >= 1/9 rejected")

    inst = rr.gen_cs_instance(40, 80, 3, 2, seed=5)
    check(len(inst.a) == 40 and len(inst.a[0]) == 80, "cs instance shape")
    rec = rr.solve_cs(inst.a, inst.y, "gaussian")
    err = math.sqrt(sum((u - v) ** 2 for u, v in zip(rec.x_hat, inst.x)))
    check(rec.converged and err < 1e-6 * math.sqrt(sum(v * v for v in inst.x)), f"cs recovery ({rec!r})")

    mc = rr.gen_mc_instance(30, 1, 0.6, 0.0, seed=2)
    out = rr.solve_mc(mc.m_obs, mc.observed, "1")
    num = sum((a - b) ** 2 for ra, rb in zip(out.l_hat, mc.l) for a, b in zip(ra, rb))
    den = sum(a * a for ra in mc.l for a in ra)
    check(math.sqrt(num / den) < 1e-4, f"mc recovery ({out!r})")

    rip = rr.rip_constant_exact([[1.0 if i == j else 0.0 for j in range(4)] for i in range(4)], 2, 2)
    check(abs(rip.delta - 1.0) < 1e-12, "rip of [I, I]")

    csv = rr.run_experiment(
        'kind = "phase-mc"\nseed = 31\ntrials = 2\nlambda = 0.3\n'
        "[model]\nn = 16\n[grid]\nr = [1]\nrho = [1.0]\ns = [0.0]\n"
    )
    lines = csv.splitlines()
    check(lines[0].startswith("experiment,cell") and len(lines) == 3, "run_experiment csv")
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
