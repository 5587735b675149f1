"""Improved vs conventional current limiting for a close-in AG fault.

Usage: python demos/csm_comparison.py
"""
from dataclasses import replace

from ibrsc.corpus import load
from ibrsc.scsolver import FaultSpec, solve_sc


def main():
    base = load("reduced_gfl")
    for csm in ("improved", "conventional"):
        net = base.replace(ibrs=tuple(replace(u, csm=csm) for u in base.ibrs))
        res = solve_sc(net, FaultSpec("3", "AG"))
        op = res.ibr_ops["wp"]
        scale = net.ibr("wp").s_rated / net.s_base
        ia, ib, ic = op.phase_currents() / scale
        print(f"{csm:<13} i_a={ia:.3f} i_b={ib:.3f} i_c={ic:.3f}  "
              f"|I1|={abs(op.i1_lv) / scale:.3f} |I2|={abs(op.i2_lv) / scale:.3f}  iterations={res.iterations}")


if __name__ == "__main__":
    main()
