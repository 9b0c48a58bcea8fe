"""Regenerates the bundled SMILES corpora.

Sources are the public NCI and WEHI sample sets that ship with the RDKit
wheel. Molecules are filtered to the subset the C++ library handles
(no stereo, single component, C/N/O/S/P/halogens, simple charges) and
written in RDKit's canonical aromatic spelling.
"""
import csv
import os
import random

import rdkit
from rdkit import Chem, RDLogger

RDLogger.DisableLog("rdApp.*")
ROOT = os.path.dirname(rdkit.__file__)
HERE = os.path.dirname(os.path.abspath(__file__))

ALLOWED = {"C", "N", "O", "S", "P", "F", "Cl", "Br", "I"}
ALLOWED_CHARGES = {("N", 1), ("O", -1), ("N", -1), ("O", 1)}
MAX_VALENCE = {"C": 4, "N": 3, "O": 2, "S": 6, "P": 5, "F": 1, "Cl": 1, "Br": 1, "I": 1}


def sources():
    with open(os.path.join(ROOT, "Data/Pains/test_data/wehi_mols.csv")) as fh:
        for row in csv.reader(fh):
            yield row[0]
    with open(os.path.join(ROOT, "Data/NCI/first_5K.smi")) as fh:
        for line in fh:
            yield line.split()[0]


def accept(mol, lo, hi):
    if mol is None or len(Chem.GetMolFrags(mol)) != 1:
        return False
    n = mol.GetNumHeavyAtoms()
    if n < lo or n > hi:
        return False
    for atom in mol.GetAtoms():
        sym, q = atom.GetSymbol(), atom.GetFormalCharge()
        if sym not in ALLOWED or atom.GetIsotope() != 0:
            return False
        if q != 0 and (sym, q) not in ALLOWED_CHARGES:
            return False
        if atom.GetNumRadicalElectrons():
            return False
        limit = MAX_VALENCE[sym] + (1 if q > 0 and sym in "NO" else 0) - (1 if q < 0 else 0)
        if atom.GetTotalValence() > limit:
            return False
    ri = mol.GetRingInfo()
    if any(len(r) > 8 for r in ri.AtomRings()):
        return False
    return True


def main():
    seen = set()
    mols = []
    for smi in sources():
        mol = Chem.MolFromSmiles(smi)
        if mol is None:
            continue
        Chem.RemoveStereochemistry(mol)
        if not accept(mol, 5, 24):
            continue
        can = Chem.MolToSmiles(mol)
        if can in seen:
            continue
        seen.add(can)
        mols.append((can, mol.GetNumHeavyAtoms()))
    rng = random.Random(7)
    rng.shuffle(mols)
    corpus = [s for s, _ in mols[:1500]]
    valid = [s for s, _ in mols[1500:1700]]
    small = [s for s, n in mols if 6 <= n <= 14][:100]
    for name, rows in (("corpus.smi", corpus), ("valid.smi", valid), ("overfit100.smi", small)):
        with open(os.path.join(HERE, name), "w") as fh:
            fh.write("# generated by make_corpus.py from the RDKit NCI/WEHI sample sets\n")
            for s in rows:
                fh.write(s + "\n")
        print(name, len(rows))


if __name__ == "__main__":
    main()
