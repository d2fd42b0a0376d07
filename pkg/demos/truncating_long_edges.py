"""Truncation study: a compact bump on two long edges.

Solves on edges of length 2, 4 and 8 with frozen far-end data and prints
how far consecutive truncations differ on the window [0, 1].
"""

from starjunction import load_problem
from starjunction.rothe import truncation_study


def main():
    report = truncation_study(load_problem("builtin:compact_bump_2edge"), [2, 4, 8], window=1.0)
    print(report.format())


if __name__ == "__main__":
    main()
