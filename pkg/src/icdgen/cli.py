"""Command-line interface.

The subcommands chain into a pipeline over plain files:

    icdgen synth --out-dir work/            # demo corpus
    icdgen build-trie work/ontology.tsv --out work/trie.bin
    icdgen train-ngram work/ontology.tsv work/train.jsonl --out work/ngram.bin
    icdgen decode work/ontology.tsv work/test.jsonl --scorer ngram:work/ngram.bin \
        --trie-cache work/trie.bin --out work/preds.jsonl
    icdgen evaluate work/ontology.tsv work/test.jsonl work/preds.jsonl -k 5 -k 15
    icdgen rerank work/ontology.tsv work/test.jsonl work/preds_a.jsonl work/preds_b.jsonl \
        --oracle --out work/merged.jsonl
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import io
from .decoder import DecodeConfig, decode_batch
from .ensemble import build_pool, concat as concat_preds, oracle_rerank, rerank as rerank_pool
from .fewshot import build_fewshot_codes
from .masking import SoapNote, make_pretrain_pair
from .metrics import evaluate, render_table
from .ontology import Ontology, Vocabulary, canonical_text, load_ontology, tokenize
from .scorer import (
    NgramScorer,
    Scorer,
    UniformScorer,
    load_ngram,
    save_ngram,
    target_token_sequence,
    train_ngram,
)
from .synthetic import make_corpus, make_soap_corpus
from .trie import build_trie, load_trie, save_trie


def _load_ontology(path: str) -> Ontology:
    return load_ontology(io.read_ontology_tsv(path))


def _ingest_notes(notes, vocab: Vocabulary) -> None:
    """Corpus ingestion: extend the vocabulary with every note's tokens."""
    for note in notes:
        tokenize(canonical_text(note.text), vocab, extend=True)


def _make_scorer(spec: str, ontology: Ontology) -> Scorer:
    if spec == "uniform":
        return UniformScorer(len(ontology.vocab))
    if spec.startswith("ngram:"):
        return load_ngram(spec.split(":", 1)[1], ontology.vocab)
    raise click.BadParameter(f"unknown scorer {spec!r}; use 'uniform' or 'ngram:PATH'")


@click.group()
def main() -> None:
    """Constrained generative medical-code assignment toolkit."""


@main.command("build-trie")
@click.argument("ontology_tsv", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path(), help="Trie cache file to write.")
def build_trie_cmd(ontology_tsv: str, out_path: str) -> None:
    """Build the description trie and cache it keyed by the TSV digest."""
    ontology = _load_ontology(ontology_tsv)
    trie = build_trie(ontology)
    save_trie(trie, out_path, source_digest=io.ontology_digest(ontology_tsv))
    click.echo(f"trie: {trie.n_nodes} nodes, {trie.n_terminals} descriptions -> {out_path}")


@main.command("train-ngram")
@click.argument("ontology_tsv", type=click.Path(exists=True))
@click.argument("train_notes", type=click.Path(exists=True))
@click.option("--order", default=3, show_default=True, type=click.IntRange(1, 4))
@click.option("--out", "out_path", required=True, type=click.Path())
def train_ngram_cmd(ontology_tsv: str, train_notes: str, order: int, out_path: str) -> None:
    """Train an n-gram scorer on the gold target sequences of TRAIN_NOTES."""
    ontology = _load_ontology(ontology_tsv)
    notes = io.read_notes_jsonl(train_notes, ontology)
    _ingest_notes(notes, ontology.vocab)
    ontology.vocab.freeze()
    corpus = [target_token_sequence(ontology, n.labels) for n in notes if n.labels]
    scorer = train_ngram(corpus, order, ontology.vocab)
    save_ngram(scorer, out_path)
    click.echo(f"ngram(order={order}) trained on {len(corpus)} sequences -> {out_path}")


@main.command("decode")
@click.argument("ontology_tsv", type=click.Path(exists=True))
@click.argument("notes_jsonl", type=click.Path(exists=True))
@click.option("--scorer", "scorer_spec", default="uniform", show_default=True)
@click.option("--beam", default=2, show_default=True, type=click.IntRange(min=1))
@click.option("--max-codes", default=100, show_default=True, type=click.IntRange(min=1))
@click.option("--trie-cache", type=click.Path(), help="Reuse/verify a cached trie build.")
@click.option("--workers", default=1, show_default=True, type=click.IntRange(min=1))
@click.option("--out", "out_path", required=True, type=click.Path())
def decode_cmd(
    ontology_tsv: str,
    notes_jsonl: str,
    scorer_spec: str,
    beam: int,
    max_codes: int,
    trie_cache: str | None,
    workers: int,
    out_path: str,
) -> None:
    """Constrained beam-search decode of every note."""
    ontology = _load_ontology(ontology_tsv)
    notes = io.read_notes_jsonl(notes_jsonl)
    _ingest_notes(notes, ontology.vocab)
    ontology.vocab.freeze()
    if trie_cache and Path(trie_cache).exists():
        trie = load_trie(trie_cache, expect_digest=io.ontology_digest(ontology_tsv))
    else:
        trie = build_trie(ontology)
        if trie_cache:
            save_trie(trie, trie_cache, source_digest=io.ontology_digest(ontology_tsv))
    scorer = _make_scorer(scorer_spec, ontology)
    cfg = DecodeConfig(beam_width=beam, max_codes=max_codes)
    result = decode_batch(notes, trie, scorer, cfg, vocab=ontology.vocab, max_workers=workers)
    preds = [p for p in result.predictions if p is not None]
    io.write_predictions_jsonl(preds, out_path)
    click.echo(f"decoded {len(preds)}/{len(notes)} notes -> {out_path}")
    if result.errors:
        for nid, err in result.errors.items():
            click.echo(f"error: note {nid}: {err}", err=True)
        sys.exit(1)


@main.command("evaluate")
@click.argument("ontology_tsv", type=click.Path(exists=True))
@click.argument("notes_jsonl", type=click.Path(exists=True))
@click.argument("predictions_jsonl", type=click.Path(exists=True))
@click.option("-k", "ks", multiple=True, type=click.IntRange(min=1), default=(15,), show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Emit the JSON report instead of the table.")
@click.option("--codes", "codes_path", type=click.Path(exists=True), help="Restrict to a code-list file.")
def evaluate_cmd(
    ontology_tsv: str,
    notes_jsonl: str,
    predictions_jsonl: str,
    ks: tuple[int, ...],
    as_json: bool,
    codes_path: str | None,
) -> None:
    """Score predictions against the notes' gold labels."""
    ontology = _load_ontology(ontology_tsv)
    notes = io.read_notes_jsonl(notes_jsonl, ontology)
    preds = io.read_predictions_jsonl(predictions_jsonl)
    gold = {n.note_id: n.labels for n in notes}
    codes = io.read_code_list(codes_path) if codes_path else None
    out_of_universe = "drop" if codes else "error"
    report = evaluate(gold, preds, ontology, ks, codes=codes, out_of_universe=out_of_universe)
    click.echo(report.to_json() if as_json else render_table(report))


@main.command("fewshot")
@click.argument("train_notes", type=click.Path(exists=True))
@click.argument("test_notes", type=click.Path(exists=True))
@click.option("--lo", default=1, show_default=True, type=click.IntRange(min=1))
@click.option("--hi", default=5, show_default=True, type=click.IntRange(min=1))
@click.option("--out", "out_path", required=True, type=click.Path())
def fewshot_cmd(train_notes: str, test_notes: str, lo: int, hi: int, out_path: str) -> None:
    """Emit the few-shot code set (training count in [lo, hi], present in test)."""
    train = io.read_notes_jsonl(train_notes)
    test = io.read_notes_jsonl(test_notes)
    codes = build_fewshot_codes(train, test, lo, hi)
    io.write_code_list(sorted(codes), out_path)
    click.echo(f"{len(codes)} few-shot codes -> {out_path}")


@main.command("mask")
@click.argument("notes_jsonl", type=click.Path(exists=True))
@click.argument("gazetteer_tsv", type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--mlm-rate", default=0.15, show_default=True, type=click.FloatRange(0.0, 0.99))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--vocab-out", type=click.Path(), help="Also write the vocabulary used for the token ids.")
def mask_cmd(
    notes_jsonl: str, gazetteer_tsv: str, seed: int, mlm_rate: float, out_path: str, vocab_out: str | None
) -> None:
    """Prepare masked pretraining pairs from SOAP-sectioned notes."""
    notes = io.read_notes_jsonl(notes_jsonl)
    gazetteer = io.read_gazetteer_tsv(gazetteer_tsv)
    vocab = Vocabulary()
    pairs = []
    skipped = 0
    from .errors import NoMaskableSentenceError

    for note in notes:
        try:
            soap = SoapNote.from_note(note)
            pairs.append(make_pretrain_pair(soap, gazetteer, vocab, seed=seed, mlm_rate=mlm_rate))
        except NoMaskableSentenceError:
            skipped += 1
    io.write_pretrain_pairs_jsonl(pairs, out_path)
    if vocab_out:
        vocab.save(vocab_out)
    click.echo(f"{len(pairs)} pairs ({skipped} skipped) -> {out_path}")


@main.command("rerank")
@click.argument("ontology_tsv", type=click.Path(exists=True))
@click.argument("notes_jsonl", type=click.Path(exists=True))
@click.argument("preds_a", type=click.Path(exists=True))
@click.argument("preds_b", type=click.Path(exists=True))
@click.option("--pool-size", default=50, show_default=True, type=click.IntRange(min=1))
@click.option("--oracle", is_flag=True, help="Use gold labels as the yes/no scorer (upper bound).")
@click.option("--scorer", "scorer_spec", default=None, help="'uniform' or 'ngram:PATH' when not --oracle.")
@click.option("--out", "out_path", required=True, type=click.Path())
def rerank_cmd(
    ontology_tsv: str,
    notes_jsonl: str,
    preds_a: str,
    preds_b: str,
    pool_size: int,
    oracle: bool,
    scorer_spec: str | None,
    out_path: str,
) -> None:
    """Pool two prediction files and keep candidates the cloze scorer accepts."""
    if not oracle and scorer_spec is None:
        raise click.UsageError("provide --oracle or --scorer")
    ontology = _load_ontology(ontology_tsv)
    notes = io.read_notes_jsonl(notes_jsonl, ontology)
    _ingest_notes(notes, ontology.vocab)
    ontology.vocab.freeze()
    a = {p.note_id: p for p in io.read_predictions_jsonl(preds_a)}
    b = {p.note_id: p for p in io.read_predictions_jsonl(preds_b)}
    scorer = None if oracle else _make_scorer(scorer_spec, ontology)
    out = []
    for note in notes:
        pool = build_pool(a[note.note_id], b[note.note_id], n_b=pool_size)
        if not pool.candidates:
            from .decoder import PredictionSet

            out.append(PredictionSet(note.note_id, (), (), terminated_naturally=True))
            continue
        if oracle:
            out.append(oracle_rerank(note, pool, note.labels, ontology))
        else:
            out.append(rerank_pool(note, pool, scorer, ontology, max_candidates=pool_size))
    io.write_predictions_jsonl(out, out_path)
    click.echo(f"reranked {len(out)} notes -> {out_path}")


@main.command("concat")
@click.argument("preds_a", type=click.Path(exists=True))
@click.argument("preds_b", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def concat_cmd(preds_a: str, preds_b: str, out_path: str) -> None:
    """Union two prediction files without rescoring."""
    a = io.read_predictions_jsonl(preds_a)
    b = {p.note_id: p for p in io.read_predictions_jsonl(preds_b)}
    out = [concat_preds(p, b[p.note_id]) for p in a]
    io.write_predictions_jsonl(out, out_path)
    click.echo(f"concatenated {len(out)} notes -> {out_path}")


@main.command("synth")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--notes", "n_notes", default=200, show_default=True, type=click.IntRange(min=4))
@click.option("--codes", "n_codes", default=30, show_default=True, type=click.IntRange(min=2))
@click.option("--seed", default=7, show_default=True, type=int)
@click.option("--soap", "n_soap", default=0, show_default=True, help="Also emit SOAP notes for masking.")
def synth_cmd(out_dir: str, n_notes: int, n_codes: int, seed: int, n_soap: int) -> None:
    """Write a synthetic demo corpus (ontology, train/test notes, gazetteer)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = make_corpus(n_notes=n_notes, n_codes=n_codes, seed=seed)
    io.write_ontology_tsv(corpus.ontology_rows, out / "ontology.tsv")
    io.write_notes_jsonl(corpus.train, out / "train.jsonl")
    io.write_notes_jsonl(corpus.test, out / "test.jsonl")
    io.write_gazetteer_tsv(corpus.gazetteer, out / "gazetteer.tsv")
    msg = f"{len(corpus.train)} train / {len(corpus.test)} test notes, {n_codes} codes -> {out}"
    if n_soap:
        soap_notes, gaz = make_soap_corpus(n_notes=n_soap, seed=seed)
        io.write_notes_jsonl(soap_notes, out / "soap.jsonl")
        io.write_gazetteer_tsv(gaz, out / "soap_gazetteer.tsv")
        msg += f" (+{n_soap} SOAP notes)"
    click.echo(msg)


if __name__ == "__main__":
    main()
