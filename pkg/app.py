# app.py: sitslab command-line entry point
# usage: python app.py synth --out data/synthetic
#        python app.py compare --data data/synthetic/manifest.json --out runs/compare --splits 5
from sitslab.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
