# A small benchmark grid: built-in codecs plus gzip wrapped as an external
# program, over two synthetic datasets. Same as `taco bench --config ...`.

from pathlib import Path

import numpy as np

from taco.bench import emit_report, exit_code, load_config, run_benchmark
from taco.synthetic import gradient_corpus, tactile_frame, write_corpus

out = Path("demo_out") / "bench"
rng = np.random.default_rng(4)
write_corpus(gradient_corpus(12, 120, 160, seed=4), out / "data" / "grad", "grad")
write_corpus([tactile_frame(120, 160, rng) for _ in range(12)], out / "data" / "gel", "gel")

config = out / "bench.toml"
config.write_text("""\
datasets = ["data/grad/grad.json", "data/gel/gel.json"]
threads = 2
codecs = [
  "taco-ll-lite",
  "taco-l-lite",
  "store",
  { id = "gzip", kind = "external-lossless",
    encode = "gzip -9 -c {in} > {out}", decode = "gzip -d -c {in} > {out}" },
]
""")

cfg = load_config(config)
rows = run_benchmark(cfg)
for r in rows:
    print(f"{r.codec:13s} {r.dataset:5s} {r.quality:9s} {r.bits_per_byte:6.3f} bits/Byte "
          f"{r.bpp:7.3f} bpp  {r.psnr:6.2f} dB  {r.status}")
for path in emit_report(rows, out / "report"):
    print("wrote", path)
print("exit code", exit_code(rows))
