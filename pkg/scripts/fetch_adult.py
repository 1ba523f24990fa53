"""Fetch the UCI Adult files into data/adult/.

The UCI archive is tried first.  When it is unreachable the two files are
taken from a PyPI wheel that vendors an unmodified copy of them.
"""
import argparse
import hashlib
import io
import sys
import urllib.request
import zipfile
from pathlib import Path

UCI = "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/"
WHEEL = ("https://files.pythonhosted.org/packages/5a/a5/1cbc6653d0fbdba238934112eeada26219e4aeb"
         "ec69632d15555c2546dd5/responsibly-0.1.3-py3-none-any.whl")
MEMBER = "responsibly/dataset/adult/"
FILES = ("adult.data", "adult.test")


def _get(url, timeout=30):
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        return resp.read()


def fetch(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    try:
        blobs = {f: _get(UCI + f) for f in FILES}
    except OSError as exc:
        print(f"UCI unreachable ({exc}); using the wheel copy", file=sys.stderr)
        zf = zipfile.ZipFile(io.BytesIO(_get(WHEEL, timeout=120)))
        blobs = {f: zf.read(MEMBER + f) for f in FILES}
    for name, blob in blobs.items():
        (out / name).write_bytes(blob)
        print(f"{name}: {len(blob)} bytes sha256={hashlib.sha256(blob).hexdigest()[:16]}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "adult"))
    fetch(Path(ap.parse_args().out))
