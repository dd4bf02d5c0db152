#!/usr/bin/env python3
"""
Lance la suite de tests de Molecular CT.

    python run_tests.py                  # tout, tests lents compris
    python run_tests.py --fast           # sans les tests marqués slow (entraînements, ablation)
    python run_tests.py --slow           # uniquement les tests lents
    python run_tests.py niu readout      # modules choisis (tests/test_niu.py, tests/test_readout.py)
    python run_tests.py -- -k locality   # options passées telles quelles à pytest
"""

import argparse
import subprocess
import sys
from pathlib import Path

PROJECT_ROOT = Path(__file__).parent
TESTS_DIR = PROJECT_ROOT / "tests"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Tests de Molecular CT")
    speed = parser.add_mutually_exclusive_group()
    speed.add_argument("--fast", action="store_true", help="exclure les tests marqués slow")
    speed.add_argument("--slow", action="store_true", help="seulement les tests marqués slow")
    parser.add_argument("modules", nargs="*", help="modules à tester (niu, test_niu, tests/test_niu.py...)")
    return parser


def resolve_module(name: str) -> Path:
    """`niu`, `test_niu`, `test_niu.py` et `tests/test_niu.py` désignent le même fichier."""
    path = Path(name)
    if path.suffix != ".py":
        path = path.with_suffix(".py")
    if not path.name.startswith("test_"):
        path = path.with_name(f"test_{path.name}")
    candidate = TESTS_DIR / path.name
    if not candidate.exists():
        raise FileNotFoundError(f"Module de test introuvable : {candidate}")
    return candidate


def build_command(args: argparse.Namespace, pytest_args=()) -> list:
    targets = [str(resolve_module(m).relative_to(PROJECT_ROOT)) for m in args.modules] or ["tests/"]
    cmd = [sys.executable, "-m", "pytest", *targets, "--color=yes"]
    if args.fast:
        cmd += ["-m", "not slow"]
    elif args.slow:
        cmd += ["-m", "slow"]
    return cmd + list(pytest_args)


def split_argv(argv):
    """Sépare les arguments du script de ceux placés après `--` pour pytest."""
    if "--" in argv:
        cut = argv.index("--")
        return argv[:cut], argv[cut + 1:]
    return argv, []


def main(argv=None) -> int:
    own, pytest_args = split_argv(list(sys.argv[1:] if argv is None else argv))
    args = build_parser().parse_args(own)
    try:
        import pytest
    except ImportError:
        print("❌ pytest non trouvé. Installez-le avec: pip install -r requirements.txt")
        return 1
    try:
        cmd = build_command(args, pytest_args)
    except FileNotFoundError as e:
        print(f"❌ {e}")
        return 1

    print(f"🧪 Tests de Molecular CT (pytest {pytest.__version__})")
    print(f"🔧 Commande: {' '.join(cmd)}")
    print("=" * 50)
    result = subprocess.run(cmd, cwd=PROJECT_ROOT, check=False)
    if result.returncode == 0:
        print("\n✅ Tous les tests sont passés")
    else:
        print(f"\n❌ Échec des tests (code de retour: {result.returncode})")
    return result.returncode


if __name__ == "__main__":
    sys.exit(main())
