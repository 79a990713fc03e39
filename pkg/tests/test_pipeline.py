import numpy as np
import pytest

from pagehtr.errors import StageError, ValidationError
from pagehtr.language import train_char_ngram
from pagehtr.pipeline import PipelineConfig, run_pipeline, write_outputs
from pagehtr.synth import make_page, write_page


def config_for(d, **kw):
    return PipelineConfig(words_path=d / "words.jsonl", grids_dir=d / "grids", ref_path=d / "ref.txt", **kw)


def test_two_band_fixture_is_exact(fixtures_dir):
    res = run_pipeline(config_for(fixtures_dir / "two_band"))
    assert len(res.lines) == 2
    assert res.alignment.cer == 0.0
    assert res.transcript == (fixtures_dir / "two_band" / "ref.txt").read_text().splitlines()


def test_filtering_helps_on_spurious_fixture(fixtures_dir):
    d = fixtures_dir / "spurious"
    on = run_pipeline(config_for(d)).alignment.cer
    off = run_pipeline(config_for(d, apply_filter=False)).alignment.cer
    assert on < off


def test_beam_mode_agrees_on_clean_grids(fixtures_dir):
    d = fixtures_dir / "two_band"
    assert run_pipeline(config_for(d, mode="beam", beam_width=4)).transcript == run_pipeline(config_for(d)).transcript


def test_ranking_with_lexicon_and_lm(tmp_path):
    page = make_page(np.random.default_rng(3), n_bands=3, words_per_band=(2, 4), confidence=0.7)
    write_page(page, tmp_path)
    (tmp_path / "lex.txt").write_text("\n".join(page.texts) + "\n")
    with open(tmp_path / "lm.bin", "wb") as fp:
        train_char_ngram(page.ref_lines, order=3).save(fp)
    cfg = config_for(tmp_path, lexicon_path=tmp_path / "lex.txt", lm_path=tmp_path / "lm.bin", mode="beam", beam_width=8, top_k=4, rank=True)
    res = run_pipeline(cfg)
    assert res.alignment.cer == 0.0


def test_empty_detections(tmp_path):
    (tmp_path / "words.jsonl").write_text("")
    (tmp_path / "grids").mkdir()
    res = run_pipeline(PipelineConfig(tmp_path / "words.jsonl", tmp_path / "grids"))
    assert res.lines == [] and res.transcript == []


def test_missing_grid_is_stage_error(tmp_path, fixtures_dir):
    page = make_page(np.random.default_rng(0), n_bands=1, words_per_band=(2, 2))
    write_page(page, tmp_path)
    (tmp_path / "grids" / "word_0001.csv").unlink()
    with pytest.raises(StageError) as info:
        run_pipeline(PipelineConfig(tmp_path / "words.jsonl", tmp_path / "grids"))
    assert info.value.stage == "grids" and "word_0001" in str(info.value)


@pytest.mark.parametrize(
    "kw",
    [{"mode": "viterbi"}, {"beam_width": 0}, {"rank": True, "mode": "beam"}, {"lm_weight": 0.5}],
)
def test_config_validation(fixtures_dir, kw):
    with pytest.raises(ValidationError):
        config_for(fixtures_dir / "two_band", **kw).validate()


def test_missing_words_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        PipelineConfig(tmp_path / "nope.jsonl", tmp_path).validate()


def test_outputs_are_deterministic(tmp_path, fixtures_dir):
    cfg = config_for(fixtures_dir / "spurious")
    for sub in ("a", "b"):
        write_outputs(run_pipeline(cfg), tmp_path / sub, cfg)
    for name in ("lines.jsonl", "transcript.txt", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
