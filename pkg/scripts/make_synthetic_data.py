"""Regenerate the bundled synthetic benchmark CSV and pretraining corpus."""

from pathlib import Path

from molfusion.synthetic import (
    BENCHMARK_FILE, CORPUS_FILE, make_benchmark, write_benchmark_csv,
)

DATA = Path(__file__).resolve().parents[1] / "src" / "molfusion" / "data"


def main():
    smiles, labels = make_benchmark(1000, seed=0)
    write_benchmark_csv(DATA / BENCHMARK_FILE, smiles, labels)
    corpus, _ = make_benchmark(1000, seed=1)
    (DATA / CORPUS_FILE).write_text("\n".join(corpus) + "\n")
    print(f"wrote {len(smiles)} labelled molecules ({labels.mean():.1%} positive) "
          f"and a {len(corpus)}-SMILES corpus to {DATA}")


if __name__ == "__main__":
    main()
