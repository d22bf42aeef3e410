import csv
import io
import json
import re
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from taco import bench
from taco.bench import (
    BenchConfig,
    config_from_dict,
    emit_report,
    exit_code,
    fps_from_speed,
    load_config,
    results_csv,
    run_benchmark,
    strip_timing,
    time_codec,
)
from taco.codecs import (
    Codec,
    CodecKind,
    CodecSpec,
    LosslessCodec,
    Registry,
    StoreCodec,
)
from taco.errors import (
    ConfigError,
    MalformedTemplate,
    MissingDataset,
    TooFewFrames,
    UnknownCodec,
    UnwritableOutput,
)
from taco.synthetic import gradient_corpus, tactile_frame, write_corpus

PY = sys.executable

GZIP = {"id": "gzip", "kind": "external-lossless",
        "encode": "gzip -9 -c {in} > {out}", "decode": "gzip -d -c {in} > {out}"}

# a lossy external: drop the low bits of every sample, then deflate
LOSSY_SCRIPT = """
import sys, zlib
mode, q, src, dst = sys.argv[1:]
data = open(src, 'rb').read()
if mode == 'enc':
    head = data.split(b'\\n', 3)
    body = bytes(b & (0xFF << int(q)) for b in head[3])
    out = zlib.compress(b'\\n'.join(head[:3]) + b'\\n' + body, 9)
else:
    out = zlib.decompress(data)
open(dst, 'wb').write(out)
"""

# a lossless external whose decoder damages one sample
BROKEN_SCRIPT = """
import sys
src, dst = sys.argv[1:]
data = bytearray(open(src, 'rb').read())
data[-1] ^= 1
open(dst, 'wb').write(data)
"""


@pytest.fixture(scope="module")
def corpora(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpora")
    rng = np.random.default_rng(0)
    grad = write_corpus(gradient_corpus(6, 40, 48, seed=1), root / "grad", "grad")
    tact = write_corpus([tactile_frame(48, 64, rng) for _ in range(5)], root / "tact", "tact")
    (root / "lossy.py").write_text(LOSSY_SCRIPT)
    (root / "broken.py").write_text(BROKEN_SCRIPT)
    return {"grad": str(grad), "tact": str(tact), "root": root}


def _lossy_ext(root):
    script = root / "lossy.py"
    return {"id": "lowbits", "kind": "external-lossy", "qualities": ["1", "2", "3", "4"],
            "encode": f"{PY} {script} enc {{quality}} {{in}} {{out}}",
            "decode": f"{PY} {script} dec 0 {{in}} {{out}}"}


def _config(corpora, codecs, datasets=("grad", "tact"), **kw):
    kw.setdefault("threads", 1)
    cfg = config_from_dict({"datasets": [corpora[d] for d in datasets], "codecs": codecs},
                           threads=kw.pop("threads"))
    cfg.timing = kw.pop("timing", False)
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg


# ---------------------------------------------------------------- grid

def test_two_by_two_grid(corpora):
    cfg = _config(corpora, ["taco-ll-lite", "store"])
    rows = run_benchmark(cfg)
    assert len(rows) == 4 == len(cfg.jobs())
    assert [(r.codec, r.dataset) for r in rows] == [
        ("store", "grad"), ("store", "tact"), ("taco-ll-lite", "grad"), ("taco-ll-lite", "tact")]
    assert all(r.ok and r.quality == "lossless" and r.psnr == float("inf") for r in rows)
    assert exit_code(rows) == bench.EXIT_OK


def test_store_codec_reports_header_overhead(corpora):
    rows = run_benchmark(_config(corpora, ["store"]))
    for r in rows:
        assert 8.0 < r.bits_per_byte < 8.2
        assert r.ratio < 1.0 and r.ms_ssim == 1.0


def test_external_gzip_is_worse_than_image_codec(corpora):
    rows = run_benchmark(_config(corpora, [GZIP, "taco-ll-lite"], datasets=("grad",)))
    by = {r.codec: r for r in rows}
    assert by["gzip"].ok
    assert by["taco-ll-lite"].bits_per_byte < by["gzip"].bits_per_byte < 8.0


def test_lossless_violation_is_recorded(corpora):
    script = corpora["root"] / "broken.py"
    bad = {"id": "broken", "kind": "external-lossless",
           "encode": "cp {in} {out}", "decode": f"{PY} {script} {{in}} {{out}}"}
    rows = run_benchmark(_config(corpora, [bad, "store"]))
    status = {(r.codec, r.dataset): r.status for r in rows}
    assert status[("broken", "grad")] == bench.STATUS_LOSSLESS_VIOLATION
    assert status[("store", "grad")] == bench.STATUS_OK
    assert exit_code(rows) == bench.EXIT_PARTIAL


def test_external_failure_is_row_scoped(corpora):
    dead = {"id": "dead", "kind": "external-lossless",
            "encode": "false {in} {out}", "decode": "cp {in} {out}"}
    missing = {"id": "nobin", "kind": "external-lossless",
               "encode": "no-such-binary-xyz {in} {out}", "decode": "cp {in} {out}"}
    cfg = _config(corpora, [dead, missing, "taco-ll-lite"])
    rows = run_benchmark(cfg)
    assert len(rows) == len(cfg.jobs()) == 6
    failed = [r for r in rows if not r.ok]
    assert {r.codec for r in failed} == {"dead", "nobin"}
    assert all(r.status == bench.STATUS_EXTERNAL_FAILURE for r in failed)


def test_lossy_external_gives_four_rd_points(corpora, tmp_path):
    cfg = _config(corpora, [_lossy_ext(corpora["root"]), "taco-l-lite"])
    rows = run_benchmark(cfg)
    assert len(rows) == 16 and all(r.ok for r in rows)
    ext = [r for r in rows if r.codec == "lowbits" and r.dataset == "grad"]
    assert [r.quality for r in ext] == ["1", "2", "3", "4"]
    assert all(np.diff([r.bpp for r in ext]) < 0)
    emit_report(rows, tmp_path)
    svg = (tmp_path / "rd_grad.svg").read_text()
    lines = re.findall(r'<polyline data-series="([^"]+)"[^>]*points="([^"]*)"', svg)
    assert {name for name, _ in lines} == {"lowbits", "taco-l-lite"}
    for _, pts in lines:
        assert len(pts.split()) == 4


def test_rows_sorted_and_identical_across_thread_counts(corpora):
    codecs = ["taco-l-lite", GZIP, "store", "taco-ll-lite"]
    a = results_csv(run_benchmark(_config(corpora, codecs, threads=1)))
    b = results_csv(run_benchmark(_config(corpora, codecs, threads=4)))
    assert strip_timing(a) == strip_timing(b)
    keys = [(r["codec"], r["dataset"]) for r in csv.DictReader(io.StringIO(a))]
    assert keys == sorted(keys)


# ---------------------------------------------------------------- report

def test_single_lossless_row_report(corpora, tmp_path):
    rows = run_benchmark(_config(corpora, ["taco-ll-lite"], datasets=("grad",)))
    written = emit_report(rows, tmp_path)
    assert not list(tmp_path.glob("*.svg"))
    assert {p.name for p in written} == {"results.csv", "results.json", "report.md"}
    lines = (tmp_path / "results.csv").read_text().splitlines()
    assert lines[0] == ",".join(bench.CSV_COLUMNS) and len(lines) == 2
    data = json.loads((tmp_path / "results.json").read_text())
    assert data[0]["psnr"] == "inf" and data[0]["bpb_frame_mean"] > 0


def test_best_and_second_markers(corpora, tmp_path):
    rows = run_benchmark(_config(corpora, ["taco-ll-lite", GZIP, "store"], datasets=("grad",)))
    emit_report(rows, tmp_path)
    md = (tmp_path / "report.md").read_text()
    table = {line.split("|")[1].strip(): line.split("|")[2].strip()
             for line in md.splitlines() if line.startswith("| ") and "bits/Byte" not in line}
    assert table["taco-ll-lite"].startswith("**")
    assert table["gzip"].startswith("_") and not table["gzip"].startswith("**")
    assert not table["store"].startswith(("*", "_"))


def test_unwritable_output(corpora, tmp_path):
    rows = run_benchmark(_config(corpora, ["store"], datasets=("grad",)))
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(UnwritableOutput):
        emit_report(rows, blocker / "sub")
    with pytest.raises(ValueError):
        emit_report([], tmp_path)


# ---------------------------------------------------------------- timing

def test_fps_arithmetic():
    assert fps_from_speed(1000, 640 * 480 * 3) == pytest.approx(1.11, abs=0.01)
    assert fps_from_speed(1000, 120 * 160 * 3) == pytest.approx(17.8, abs=0.05)


class _SleepCodec(Codec):
    """Identity codec with a fixed cost per frame."""

    def __init__(self, delay):
        self.spec = CodecSpec("sleep", CodecKind.BUILTIN_LOSSLESS)
        self.inner = StoreCodec()
        self.delay = delay

    def encode(self, frame, quality="lossless"):
        time.sleep(self.delay)
        return self.inner.encode(frame)

    def decode(self, data):
        time.sleep(self.delay)
        return self.inner.decode(data)


def test_time_codec_protocol():
    frames = [tactile_frame(48, 64, np.random.default_rng(i)) for i in range(12)]
    with pytest.raises(TooFewFrames):
        time_codec(StoreCodec(), frames[:9])
    enc_kbps, dec_kbps, enc_fps, dec_fps = time_codec(_SleepCodec(0.004), frames)
    # ten timed frames at about 4 ms each
    assert 150 < enc_fps <= 250 and 150 < dec_fps <= 250
    assert enc_kbps == pytest.approx(enc_fps * frames[0].nbytes / 1024, rel=1e-9)


def test_fps_depends_on_resolution_and_is_stable():
    codec = LosslessCodec()
    big = [tactile_frame(240, 320, np.random.default_rng(i)) for i in range(12)]
    small = [tactile_frame(60, 80, np.random.default_rng(i)) for i in range(12)]
    fps_big = [time_codec(codec, big)[2] for _ in range(2)]
    fps_small = time_codec(codec, small)[2]
    assert fps_small > 4 * fps_big[0]
    assert abs(fps_big[0] - fps_big[1]) <= 0.2 * max(fps_big)


def test_timing_columns(corpora):
    rows = run_benchmark(_config(corpora, ["taco-ll-lite"], datasets=("grad",), timing=True))
    # six frames are too few to time: the row stays ok with blank timings
    assert rows[0].ok and np.isnan(rows[0].enc_kbps) and "timing" in rows[0].message
    many = write_corpus(gradient_corpus(12, 32, 32), corpora["root"] / "many", "many")
    cfg = config_from_dict({"datasets": [str(many)], "codecs": ["taco-ll-lite"]},
                           serial_timing=True)
    rows = run_benchmark(cfg)
    assert rows[0].enc_kbps > 0 and rows[0].dec_fps > 0


# ---------------------------------------------------------------- config

def test_load_config_toml(corpora, tmp_path):
    cfg_path = tmp_path / "bench.toml"
    rel = Path(corpora["grad"]).relative_to(corpora["root"])
    cfg_path.write_text(
        f'datasets = ["{corpora["root"] / rel}"]\n'
        'threads = 3\nout = "res"\n'
        'codecs = ["taco-ll-lite", {id = "taco-l-lite", qualities = ["0", "step=4"]},\n'
        '  {id = "gz", kind = "external-lossless", encode = "gzip -c {in} > {out}",'
        ' decode = "gzip -dc {in} > {out}"}]\n')
    cfg = load_config(cfg_path)
    assert cfg.threads == 3 and cfg.out == "res"
    assert cfg.jobs() == [("taco-ll-lite", cfg.datasets[0], "lossless"),
                          ("taco-l-lite", cfg.datasets[0], "0"),
                          ("taco-l-lite", cfg.datasets[0], "step=4"),
                          ("gz", cfg.datasets[0], "lossless")]
    assert load_config(cfg_path, threads=1).threads == 1


def test_relative_dataset_paths(corpora, tmp_path):
    (tmp_path / "b.toml").write_text('datasets = ["d/x.json"]\ncodecs = ["store"]\n')
    cfg = load_config(tmp_path / "b.toml")
    assert cfg.datasets == [str(tmp_path / "d" / "x.json")]
    with pytest.raises(MissingDataset):
        run_benchmark(cfg)


def test_config_errors(corpora, tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("datasets = [\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")
    with pytest.raises(ConfigError):
        config_from_dict({"datasets": []})
    with pytest.raises(UnknownCodec):
        config_from_dict({"datasets": [], "codecs": ["nope"]})
    with pytest.raises(ConfigError):
        config_from_dict({"datasets": [], "codecs": ["store", "store"]})
    with pytest.raises(ConfigError):
        config_from_dict({"datasets": [], "codecs": [{"id": "x", "kind": "weird"}]})
    # every config failure maps onto exit code 1 through ConfigError
    assert issubclass(UnknownCodec, ConfigError) and issubclass(MissingDataset, ConfigError)
    assert issubclass(MalformedTemplate, ConfigError)


@pytest.mark.parametrize("spec", [
    dict(encode_cmd="gzip -c {in}", decode_cmd="gzip -dc {in} > {out}"),
    dict(encode_cmd="gzip -c {in} > {out} {level}", decode_cmd="gzip -dc {in} > {out}"),
    dict(encode_cmd=None, decode_cmd="gzip -dc {in} > {out}"),
    dict(encode_cmd="x {in} {out", decode_cmd="gzip -dc {in} > {out}"),
])
def test_malformed_templates(spec):
    with pytest.raises(MalformedTemplate):
        CodecSpec("bad", CodecKind.EXTERNAL_LOSSLESS, **spec)


def test_template_rules():
    with pytest.raises(MalformedTemplate):
        CodecSpec("lossy", CodecKind.EXTERNAL_LOSSY, "c {in} {out}", "d {in} {out}", ("1",))
    with pytest.raises(MalformedTemplate):
        CodecSpec("b", CodecKind.BUILTIN_LOSSLESS, "c {in} {out}")
    with pytest.raises(MalformedTemplate):
        CodecSpec("lossy", CodecKind.EXTERNAL_LOSSY, "c {quality} {in} {out}", "d {in} {out}")
    ok = CodecSpec("ok", CodecKind.EXTERNAL_LOSSY, "c -q {quality} {in} {out}", "d {in} {out}",
                   ("1", "2"))
    reg = Registry.default()
    reg.register_external(ok)
    with pytest.raises(ValueError):
        reg.register_external(ok)
    assert "ok" in reg.ids()
