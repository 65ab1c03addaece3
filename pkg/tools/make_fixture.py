#!/usr/bin/env python3
"""Regenerate ``src/qgat/data/qm9_fixture.jsonl``.

QM9 itself is not redistributed here. The fixture is a QM9-style stand-in:
small organic molecules over C, N, O, F with at most 9 heavy atoms, explicit
hydrogens, and the same 11-column atom descriptor layout the loader expects.

Targets are NOT DFT values. They come from a bond-orbital tight-binding
model: every sigma bond, and every pi component of a multiple bond, gives a
bonding/antibonding pair from the two atoms' on-site energies and a
resonance integral; orbitals on bonds that share an atom are coupled. The
lowest antibonding eigenvalue is ``lumo``; the highest of the bonding
eigenvalues and lone-pair levels is ``homo`` (eV-like units). This keeps the
regression task graph- and composition-dependent without a quantum
chemistry package.

To use real QM9 instead, write one JSON line per molecule in the same schema
(see ``qgat.graph``) with the DFT LUMO as ``target``.

Requires rdkit (``pip install rdkit``). Output is deterministic for a seed.
"""

import argparse
import json
import random
from pathlib import Path

import numpy as np
from rdkit import Chem, RDLogger

RDLogger.DisableLog("rdApp.*")

ELEMENTS = ["C", "C", "C", "C", "N", "O", "F"]
VALENCE = {"C": 4, "N": 3, "O": 2, "F": 1}
ONSITE = {1: -13.6, 6: -11.4, 7: -13.4, 8: -14.8, 9: -18.1}
BETA_SIGMA = 6.0
BETA_PI = 2.5
COUPLING = 1.0
LONE_PAIRS = {7: 1, 8: 2, 9: 3}
BUCKETS = [(1, 9), (10, 16), (17, 20), (21, 25)]


def random_heavy_skeleton(rng: random.Random, max_heavy: int):
    n = rng.randint(1, max_heavy)
    mol = Chem.RWMol()
    free = []
    for i in range(n):
        el = rng.choice(ELEMENTS)
        idx = mol.AddAtom(Chem.Atom(el))
        free.append(VALENCE[el])
        if i:
            partners = [j for j in range(i) if free[j] > 0]
            if not partners:
                return None
            j = rng.choice(partners)
            order = 1
            if rng.random() < 0.25 and min(free[j], free[idx]) >= 2:
                order = 2 if rng.random() < 0.8 or min(free[j], free[idx]) < 3 else 3
            mol.AddBond(j, idx, {1: Chem.BondType.SINGLE, 2: Chem.BondType.DOUBLE,
                                 3: Chem.BondType.TRIPLE}[order])
            free[j] -= order
            free[idx] -= order
    # occasional ring closure
    if n >= 3 and rng.random() < 0.3:
        a, b = rng.sample(range(n), 2)
        if free[a] > 0 and free[b] > 0 and mol.GetBondBetweenAtoms(a, b) is None:
            mol.AddBond(a, b, Chem.BondType.SINGLE)
    try:
        m = mol.GetMol()
        Chem.SanitizeMol(m)
    except Exception:
        return None
    return Chem.MolFromSmiles(Chem.MolToSmiles(m))


def atom_row(atom) -> list[float]:
    return [
        float(atom.GetAtomicNum()),
        float(int(atom.GetChiralTag())),
        float(atom.GetDegree()),
        float(atom.GetFormalCharge()),
        float(atom.GetNumRadicalElectrons()),
        float(int(atom.GetHybridization())),
        float(atom.GetIsAromatic()),
        float(atom.GetTotalNumHs()),
        float(atom.IsInRing()),
        float(atom.GetTotalValence()),
        atom.GetMass() * 0.01,
    ]


def frontier_levels(mol) -> dict:
    anti, bonding, owners = [], [], []
    for bond in mol.GetBonds():
        i, j = bond.GetBeginAtomIdx(), bond.GetEndAtomIdx()
        hi = ONSITE[mol.GetAtomWithIdx(i).GetAtomicNum()]
        hj = ONSITE[mol.GetAtomWithIdx(j).GetAtomicNum()]
        mid, half = (hi + hj) / 2, (hi - hj) / 2
        n_pi = int(round(bond.GetBondTypeAsDouble())) - 1
        for beta in [BETA_SIGMA] + [BETA_PI] * n_pi:
            split = np.hypot(half, beta)
            anti.append(mid + split)
            bonding.append(mid - split)
            owners.append({i, j})
    if not anti:
        # lone atom: its own level is both frontier orbitals
        level = ONSITE[mol.GetAtomWithIdx(0).GetAtomicNum()]
        return {"lumo": level, "homo": level, "gap": 0.0}
    h_anti, h_bond = np.diag(anti), np.diag(bonding)
    for a in range(len(anti)):
        for b in range(a + 1, len(anti)):
            if owners[a] & owners[b]:
                h_anti[a, b] = h_anti[b, a] = -COUPLING
                h_bond[a, b] = h_bond[b, a] = COUPLING
    lone = [ONSITE[atom.GetAtomicNum()] for atom in mol.GetAtoms()
            for _ in range(LONE_PAIRS.get(atom.GetAtomicNum(), 0))]
    lumo = float(np.linalg.eigvalsh(h_anti)[0])
    homo = float(max([np.linalg.eigvalsh(h_bond)[-1]] + lone))
    return {"lumo": round(lumo, 6), "homo": round(homo, 6), "gap": round(lumo - homo, 6)}


def record(mol, ident: str) -> dict:
    molh = Chem.AddHs(mol)
    feats = [atom_row(a) for a in molh.GetAtoms()]
    edges = sorted(sorted((b.GetBeginAtomIdx(), b.GetEndAtomIdx())) for b in molh.GetBonds())
    targets = frontier_levels(molh)
    return {
        "id": ident,
        "smiles": Chem.MolToSmiles(mol),
        "features": feats,
        "edges": [list(e) for e in edges],
        "target": targets["lumo"],
        "targets": targets,
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path,
                        default=Path(__file__).resolve().parents[1] / "src/qgat/data/qm9_fixture.jsonl")
    parser.add_argument("--per-bucket", type=int, default=60)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)

    rng = random.Random(args.seed)
    found: dict[str, int] = {}
    buckets = {b: [] for b in BUCKETS}
    tries = 0
    while any(len(v) < args.per_bucket for v in buckets.values()) and tries < 400_000:
        tries += 1
        mol = random_heavy_skeleton(rng, 9)
        if mol is None:
            continue
        smi = Chem.MolToSmiles(mol)
        if smi in found:
            continue
        size = Chem.AddHs(mol).GetNumAtoms()
        found[smi] = size
        for lo, hi in BUCKETS:
            if lo <= size <= hi and len(buckets[(lo, hi)]) < args.per_bucket:
                buckets[(lo, hi)].append(mol)

    records = []
    for lo, hi in BUCKETS:
        for mol in sorted(buckets[(lo, hi)], key=Chem.MolToSmiles):
            records.append(record(mol, f"fx{len(records):04d}"))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with args.out.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
    counts = {f"{lo}-{hi}": len(v) for (lo, hi), v in buckets.items()}
    print(f"wrote {len(records)} molecules to {args.out} ({counts}, {tries} draws)")


if __name__ == "__main__":
    main()
