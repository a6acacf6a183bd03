#!/usr/bin/env python3
"""Writes the synthetic expression and metadata fixtures under data/fixtures.

Four donors with 5, 10, 33 and 12 cell types; every type has 1-3 cells and
every cell a sparse profile over a shared gene panel, with a few marker genes
per type boosted so top-gene lists differ between types.
"""

import argparse
import json
import pathlib
import random

CELL_TYPES = [
    "B cell", "T cell", "natural killer cell", "classical monocyte", "non-classical monocyte",
    "plasmacytoid dendritic cell", "conventional dendritic cell", "mast cell", "neutrophil", "basophil",
    "eosinophil", "platelet", "erythrocyte", "plasma cell", "regulatory T cell",
    "CD8-positive, alpha-beta T cell", "CD4-positive helper T cell", "gamma-delta T cell", "mucosal invariant T cell",
    "alveolar macrophage", "type II pneumocyte", "type I pneumocyte", "ciliated cell", "club cell",
    "goblet cell", "basal cell", "fibroblast", "smooth muscle cell", "pericyte",
    "endothelial cell of artery", "vein endothelial cell", "capillary endothelial cell", "lymphatic endothelial cell",
    "enterocyte", "paneth cell", "hepatocyte",
]

DONORS = [
    ("donor-a", 5, {"sex": "female", "development_stage": "third decade human stage", "tissue": "blood", "disease": "normal"}),
    ("donor-b", 10, {"sex": "male", "development_stage": "65-year-old human stage", "tissue": "ileum", "disease": "crohn disease",
                     "smoking_status": "never"}),
    ("donor-c", 33, {"sex": "male", "tissue": "lung", "disease": "lung adenocarcinoma", "smoking_status": "former",
                     "tumor_stage": "early", "sample_type": "tumor", "egfr": "mutant"}),
    ("donor-d", 12, {"sex": "female", "development_stage": "fifth decade human stage", "tissue": "kidney", "disease": "normal",
                     "diabetes": "yes", "hypertension": "no"}),
]

PANEL_SIZE = 400
GENES_PER_CELL = 90
MARKERS_PER_TYPE = 12


def gene_symbol(i):
    return f"GENE{i:04d}"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data" / "fixtures"))
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    markers = {t: rng.sample(range(PANEL_SIZE), MARKERS_PER_TYPE) for t in CELL_TYPES}

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "expression.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for donor, n_types, _ in DONORS:
            for t in rng.sample(CELL_TYPES, n_types):
                for c in range(rng.randint(1, 3)):
                    genes = set(rng.sample(range(PANEL_SIZE), GENES_PER_CELL)) | set(markers[t])
                    expression = {}
                    for g in sorted(genes):
                        count = rng.randint(0, 20)
                        if g in markers[t]:
                            count += rng.randint(40, 120)
                        expression[gene_symbol(g)] = count
                    cell_id = f"{donor}:{t.replace(' ', '_')}:{c}"
                    record = {"cell_id": cell_id, "donor_id": donor, "cell_type": t, "expression": expression}
                    f.write(json.dumps(record, ensure_ascii=False) + "\n")

    with open(out / "metadata.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for donor, _, attributes in DONORS:
            f.write(json.dumps({"donor_id": donor, "attributes": attributes}, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main()
