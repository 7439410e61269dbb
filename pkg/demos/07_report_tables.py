"""Writing the publication tables and plots through the command line."""
import subprocess
import sys
import tempfile
from pathlib import Path

from danadisinfo.corpus import dump_corpus
from danadisinfo.synthetic import make_corpus

work = Path(tempfile.mkdtemp())
(work / "wav").mkdir()
dump_corpus(make_corpus(40, 40, seed=4, audio_dir=str(work / "wav")), work / "posts.jsonl")
(work / "lexicon.txt").write_text("conspiracion: ocult*, mienten, haarp\nayuda: ayudar, voluntarios\n")


def cli(*args):
    out = subprocess.run([sys.executable, "-m", "danadisinfo", *map(str, args)],
                         capture_output=True, text=True, check=True)
    return out.stdout + out.stderr


print(cli("ingest", "--input", work / "posts.jsonl", "--stats"))
print(cli("audio-extract", "--corpus", work / "posts.jsonl", "--out", work / "audio.csv", "--workers", 4))
print(cli("report", "--corpus", work / "posts.jsonl", "--out-dir", work / "report",
          "--audio", work / "audio.csv", "--lexicon", work / "lexicon.txt", "--with-svm"))
print((work / "report" / "audio_comparison.csv").read_text()[:400])
print("outputs in", work / "report")
