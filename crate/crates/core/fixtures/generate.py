"""Writes the synthetic Davis-format fixtures.

Real Davis files cannot be fetched here, so drugs are known kinase
inhibitors, targets are seeded sequences stitched from motifs shared
within one of three families plus motifs private to each target, and
affinities follow a pKd-like distribution (most pairs at
5.0) driven by drug chemistry and target family so there is signal to fit.
"""

import os
import random

DRUGS = [
    "Cc1ccc(NC(=O)c2ccc(CN3CCN(C)CC3)cc2)cc1Nc1nccc(-c2cccnc2)n1",
    "COc1cc2ncnc(Nc3ccc(F)c(Cl)c3)c2cc1OCCCN1CCOCC1",
    "COCCOc1cc2ncnc(Nc3cccc(C#C)c3)c2cc1OCCOC",
    "CS(=O)(=O)CCNCc1ccc(-c2ccc3ncnc(Nc4ccc(OCc5cccc(F)c5)c(Cl)c4)c3c2)o1",
    "CNC(=O)c1cc(Oc2ccc(NC(=O)Nc3ccc(Cl)c(C(F)(F)F)c3)cc2)ccn1",
    "CCN(CC)CCNC(=O)c1c(C)[nH]c(C=C2C(=O)Nc3ccc(F)cc32)c1C",
    "Cc1nc(Nc2ncc(C(=O)Nc3c(C)cccc3Cl)s2)cc(N2CCN(CCO)CC2)n1",
    "Cc1cn(-c2cc(NC(=O)c3ccc(C)c(Nc4nccc(-c5cccnc5)n4)c3)cc(C(F)(F)F)c2)cn1",
    "CN1CCN(Cc2ccc(C(=O)Nc3ccc(C)c(C#Cc4cnc5cccnn45)c3)cc2C(F)(F)F)CC1",
    "Cc1ccc(C(=O)Nc2ccc(CN3CCN(C)CC3)c(C(F)(F)F)c2)cc1C#Cc1cnc2cccnn12",
    "COc1cc(Nc2c(C#N)cnc3cc(OCCCN4CCN(C)CC4)c(OC)cc23)c(Cl)cc1Cl",
    "CC(C)n1nc(-c2ccc(N)cc2)c2c(N)ncnc21",
    "Nc1ncnc2c1c(-c1ccc(Oc3ccccc3)cc1)nn2C1CCCN(C(=O)C=C)C1",
    "O=C(Nc1ccc(Cl)cc1)c1ccccc1Nc1ccncc1",
    "CC1=C(C(=O)Nc2ccccc2)C(c2ccccc2)C(C(=O)OC)=C(C)N1",
    "Cc1cc(Nc2cc(N3CCN(C)CC3)nc(Sc3ccc(NC(=O)C4CC4)cc3)n2)n[nH]1",
    "CN(C)CC=CC(=O)Nc1cc2c(Nc3ccc(F)c(Cl)c3)ncnc2cc1OC1CCOC1",
    "O=C(c1ccccc1)c1ccc2n1CCC2C(=O)O",
    "COc1ccc(-c2cc3c(N)ncnc3n2C)cc1",
    "Clc1ccc(Nc2nnc(Cc3ccncc3)c3ccccc23)cc1",
    "CC(Oc1cc(-c2cnn(C3CCNCC3)c2)cnc1N)c1c(Cl)ccc(F)c1Cl",
    "Cc1ccc(F)c(NC(=O)Nc2ccc(-c3cccc4[nH]nc(N)c34)cc2)c1",
    "CN(C)C(=O)c1ccc(cc1)N1CCN(CC1)c1ncnc2[nH]ccc12",
    "O=C1NC(=O)C(=Cc2ccc(O)c(O)c2)S1",
    "C#Cc1cccc(Nc2ncnc3cc4c(cc23)OCCOCCOCCO4)c1",
    "Cc1c(C(=O)NC2CC2)sc2ncnc(Nc3ccc(F)cc3OC)c12",
    "N#Cc1ccc(Nc2nccc(Nc3ccc(cc3)S(N)(=O)=O)n2)cc1",
    "OCCn1cc(-c2cnc3[nH]ccc3c2)cn1",
    "CC(C)Oc1ccc(cc1)C(=O)Nc1ccc2[nH]ncc2c1",
    "Cn1cnc2c(Nc3cccc(Cl)c3)nc(NCCO)nc21",
    "O=c1[nH]c2ccccc2n1C1CCN(Cc2ccc(-c3nc4ccccc4[nH]3)cc2)CC1",
    "COc1cc2c(Oc3ccc(NC(=O)C4(C(=O)Nc5ccc(F)cc5)CC4)cc3F)ccnc2cc1OC",
    "Cc1ccc(cc1)S(=O)(=O)Nc1ccc2ncnc(Nc3cccc(Br)c3)c2c1",
    "NC(=O)c1cccc2cn(-c3ccc(cc3)C3CCCNC3)nc12",
    "CC(=O)Nc1nc2ccc(-c3ccnc(N)n3)cc2s1",
    "Fc1ccc(Nc2ncnc3ccc(NC(=O)C=C)cc23)cc1Cl",
    "CN1CCC(CC1)Nc1ncc2cc(-c3c(Cl)cccc3Cl)c(=O)n(C)c2n1",
    "O=C(O)c1ccc(Nc2ncc3c(n2)-c2ccc(Cl)cc2C(c2c(F)cccc2OC)=NC3)cc1",
    "Cc1cnc(Nc2ccc(OCCN3CCCC3)cc2)nc1Nc1cccc(S(=O)(=O)NC(C)(C)C)c1",
    "COc1cc(ccc1Nc1ncc(Cl)c(Nc2ccccc2S(=O)(=O)C(C)C)n1)N1CCC(CC1)N1CCN(C)CC1",
]

FAMILIES = [
    "ACDEFGHIKLMNPQRSTVWY" + "KKRRHH",
    "ACDEFGHIKLMNPQRSTVWY" + "DDEEGG",
    "ACDEFGHIKLMNPQRSTVWY" + "LLIIVVFF",
]


def chemistry(smiles):
    n = sum(smiles.count(c) for c in "Nn")
    halo = smiles.count("F") + smiles.count("Cl") + smiles.count("Br")
    arom = sum(1 for c in smiles if c in "cn")
    return (n / 6.0, halo / 3.0, arom / 20.0)


def write(directory, drugs, targets, pairs):
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "drugs.tsv"), "w") as f:
        f.write("drug_id\tsmiles\n")
        for i, s in drugs:
            f.write(f"{i}\t{s}\n")
    with open(os.path.join(directory, "targets.tsv"), "w") as f:
        f.write("target_id\tsequence\n")
        for i, s, _ in targets:
            f.write(f"{i}\t{s}\n")
    name = os.path.basename(directory)
    with open(os.path.join(directory, f"{name}.tsv"), "w") as f:
        f.write("drug_id\ttarget_id\taffinity\n")
        for d, t, y in pairs:
            f.write(f"{d}\t{t}\t{y:.4f}\n")


def main():
    rng = random.Random(20231017)
    drugs = [(f"D{i:03d}", s) for i, s in enumerate(DRUGS)]
    def motif(alphabet):
        return "".join(rng.choice(alphabet) for _ in range(rng.randint(10, 20)))

    shared = [[motif(FAMILIES[f]) for _ in range(20)] for f in range(3)]
    targets = []
    for i in range(50):
        fam = i % 3
        private = [motif(FAMILIES[fam]) for _ in range(6)]
        length = rng.randint(400, 1200)
        seq = ""
        while len(seq) < length:
            pool = private if rng.random() < 0.3 else shared[fam]
            seq += rng.choice(pool) + "".join(rng.choice(FAMILIES[fam]) for _ in range(rng.randint(0, 4)))
        targets.append((f"T{i:03d}", seq[:length], fam))
    weights = [rng.gauss(0, 1) for _ in range(50)]

    def affinity(d, t):
        chem = chemistry(drugs[d][1])
        fam = targets[t][2]
        score = 2.2 * chem[fam] + 0.6 * weights[t] + 0.4 * chem[(fam + 1) % 3] - 2.3
        score += rng.gauss(0, 0.3)
        return 5.0 if score <= 0 else min(10.8, 5.0 + 1.8 * score)

    full = [(drugs[d][0], targets[t][0], affinity(d, t)) for d in range(40) for t in range(50)]
    here = os.path.dirname(os.path.abspath(__file__))
    write(os.path.join(here, "davis2000"), drugs, targets, full)

    small = [p for p in full if int(p[0][1:]) < 8 and int(p[1][1:]) < 8]
    write(os.path.join(here, "davis64"), drugs[:8], targets[:8], small)


if __name__ == "__main__":
    main()
