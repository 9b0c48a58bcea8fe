"""Freezes independent reference values (computed with RDKit) for the
chemistry unit tests: atom/bond counts, double/triple bond counts of the
Kekule form, ring-bond count, SSSR ring count, average molecular weight
and a randomized SMILES spelling of the same molecule."""
import os
import random

from rdkit import Chem
from rdkit.Chem import Descriptors

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    rng = random.Random(11)
    rows = [l.strip() for l in open(os.path.join(HERE, "corpus.smi")) if not l.startswith("#")]
    out = os.path.join(HERE, "..", "tests", "data", "chem_oracle.tsv")
    with open(out, "w") as fh:
        fh.write("# smiles\tatoms\tbonds\tdouble\ttriple\tring_bonds\trings\tmol_wt\trandom_smiles\n")
        for smi in rows[:400]:
            mol = Chem.MolFromSmiles(smi)
            Chem.Kekulize(mol, clearAromaticFlags=True)
            dbl = sum(1 for b in mol.GetBonds() if b.GetBondType() == Chem.BondType.DOUBLE)
            tri = sum(1 for b in mol.GetBonds() if b.GetBondType() == Chem.BondType.TRIPLE)
            ring_bonds = sum(1 for b in mol.GetBonds() if b.IsInRing())
            rings = len(Chem.GetSSSR(mol))
            wt = Descriptors.MolWt(Chem.MolFromSmiles(smi))
            Chem.SetAromaticity(mol)
            rnd = Chem.MolToRandomSmilesVect(Chem.MolFromSmiles(smi), 1, randomSeed=rng.randrange(1 << 30))[0]
            fh.write(f"{smi}\t{mol.GetNumAtoms()}\t{mol.GetNumBonds()}\t{dbl}\t{tri}\t{ring_bonds}\t{rings}\t{wt:.4f}\t{rnd}\n")


if __name__ == "__main__":
    main()
