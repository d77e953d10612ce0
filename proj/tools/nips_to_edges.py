#!/usr/bin/env python3
"""Convert NIPS 1-17 co-authorship data into the edge list read by `vimf`.

Input is a document x author incidence, either
  * a MATLAB file holding a sparse `docs_authors` matrix (needs scipy), or
  * a text file of "doc author" lines (any integer ids, used as given).

Two authors are linked when they share at least one paper. With --authors,
only the listed author ids are kept (one id per line, in output order), which
is how the 234-author subset is selected; ids for a .mat input are 1-based
column numbers, as in MATLAB. Output lines are "i j" with
0-based i < j, one per linked pair, sorted.

    tools/nips_to_edges.py nips_1-17.mat --authors authors234.txt -o data/nips/edges.txt
"""

import argparse
import collections
import itertools
import sys


def read_incidence(path):
    if path.endswith(".mat"):
        try:
            from scipy.io import loadmat
        except ImportError:
            sys.exit("reading .mat files needs scipy; convert to 'doc author' lines instead")
        m = loadmat(path)["docs_authors"].tocoo()
        # MATLAB column indices become 1-based author ids.
        return [(int(d), int(a) + 1) for d, a in zip(m.row, m.col)]
    pairs = []
    with open(path) as f:
        for n, line in enumerate(f, 1):
            fields = line.split()
            if not fields or fields[0].startswith("#"):
                continue
            if len(fields) != 2:
                sys.exit(f"{path}:{n}: expected 'doc author', got {line.strip()!r}")
            pairs.append((int(fields[0]), int(fields[1])))
    return pairs


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("incidence")
    p.add_argument("--authors", help="file of author ids to keep, one per line")
    p.add_argument("-o", "--output", default="-")
    args = p.parse_args()

    incidence = read_incidence(args.incidence)
    if args.authors:
        with open(args.authors) as f:
            keep = [int(line.split()[0]) for line in f if line.strip() and not line.startswith("#")]
    else:
        keep = sorted({a for _, a in incidence})
    index = {a: k for k, a in enumerate(keep)}
    if len(index) != len(keep):
        sys.exit("duplicate ids in the author list")

    by_doc = collections.defaultdict(set)
    for doc, author in incidence:
        if author in index:
            by_doc[doc].add(index[author])
    edges = set()
    for members in by_doc.values():
        for i, j in itertools.combinations(sorted(members), 2):
            edges.add((i, j))

    out = sys.stdout if args.output == "-" else open(args.output, "w")
    for i, j in sorted(edges):
        out.write(f"{i} {j}\n")
    if out is not sys.stdout:
        out.close()
    print(f"{len(keep)} authors, {len(edges)} linked pairs", file=sys.stderr)


if __name__ == "__main__":
    main()
