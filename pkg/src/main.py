"""Entry point principale per il modello di misture nHDP."""

import argparse
import logging
import os
import sys

from dotenv import load_dotenv

from src.utils.config import OUTPUT_DIR, setup_logging
from src.utils.errors import ConfigError, NHDPError

load_dotenv()
logger = logging.getLogger(__name__)


def _pair(raw: str):
    parts = [p for p in raw.replace(",", " ").split() if p]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"attesi due valori, trovato {raw!r}")
    return float(parts[0]), float(parts[1])


def _interval(raw: str):
    lo, hi = _pair(raw)
    return int(lo), int(hi)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="nHDP mixture model: simulazione, fit MCMC e riassunti della posterior")
    parser.add_argument("--verbose", action="store_true", help="Log di livello DEBUG")
    subparsers = parser.add_subparsers(dest="command", help="Comandi disponibili")

    sim = subparsers.add_parser("simulate", help="Genera un dataset sintetico")
    sim.add_argument("--preset", type=str, required=True, choices=["A", "B", "twogroup"], help="Dataset da generare")
    sim.add_argument("--seed", type=int, default=0, help="Seed del generatore")
    sim.add_argument("--out", type=str, default=os.path.join(OUTPUT_DIR, "data"), help="Directory di output")
    sim.add_argument("--subjects", type=int, help="Numero di soggetti (solo twogroup)")
    sim.add_argument("--horizon", type=int, help="Numero di giorni (solo twogroup)")
    sim.add_argument("--split", type=int, help="Primo giorno divergente (solo twogroup, default horizon − 3)")

    fit = subparsers.add_parser("fit", help="Esegue le catene MCMC e scrive tracce e manifest")
    _add_fit_arguments(fit)

    summ = subparsers.add_parser("summarize", help="Riassume le tracce di un fit")
    summ.add_argument("--trace", type=str, required=True, help="Directory di output di fit")
    summ.add_argument("--out", type=str, help="Directory dei riassunti (default: <trace>/summary)")
    summ.add_argument("--burnin-fraction", type=float, default=None, help="Frazione delle sweep da scartare (default 0.5)")
    summ.add_argument("--thin", type=int, default=None, help="Tiene un record ogni THIN (default 5)")
    summ.add_argument("--interval", type=_interval, help="Slot 'inizio,fine' del co-clustering (default: ultimi 4)")
    summ.add_argument("--alignment", type=str, default="overlap", choices=["overlap", "mean"], help="Allineamento degli atomi")

    mom = subparsers.add_parser("moments", help="Momenti in forma chiusa contro Monte Carlo troncato (CSV su stdout)")
    mom.add_argument("--variant", type=str, default="gp", choices=["gp", "product", "constant", "markov-chain"], help="Variante di H")
    mom.add_argument("--sigma2", type=float, default=1.0, help="Varianza σ² di H")
    mom.add_argument("--omega", type=float, default=0.05, help="Decadimento ω di H")
    mom.add_argument("--distance", type=float, default=1.0, help="Distanza ‖u − v‖ tra i due slot")
    mom.add_argument("--gamma", type=float, default=1.0, help="Concentrazione globale γ")
    mom.add_argument("--alpha", type=_pair, default=(1.0, 1.0), help="Concentrazioni 'α_u,α_v'")
    mom.add_argument("--event", type=_pair, default=(float("-inf"), 0.0), help="Intervallo 'lo,hi' degli eventi A e B")
    mom.add_argument("--truncation", type=int, default=None, help="Troncatura L (default 1000)")
    mom.add_argument("--replicates", type=int, default=None, help="Repliche R (default 20000)")
    mom.add_argument("--seed", type=int, default=0, help="Seed del Monte Carlo")
    mom.add_argument("--out", type=str, help="Salva anche la tabella in questo CSV")

    chk = subparsers.add_parser("selfcheck", help="Esegue la suite di oracoli")
    chk.add_argument("--seed", type=int, default=0, help="Seed della suite")
    chk.add_argument("--out", type=str, default=os.path.join(OUTPUT_DIR, "selfcheck"), help="Directory di output")

    sens = subparsers.add_parser("sensitivity", help="Ripete il fit per diversi ω")
    _add_fit_arguments(sens)
    sens.add_argument("--omegas", type=float, nargs="+", default=[0.01, 0.05, 0.1, 0.5], help="Valori di ω")
    sens.add_argument("--target-k", type=int, default=5, help="K di riferimento per P(K = target)")
    return parser


def _add_fit_arguments(sub: argparse.ArgumentParser):
    sub.add_argument("--config", type=str, help="File di configurazione chiave = valore")
    sub.add_argument("--preset", type=str, help="Preset di configurazione (paperA, paperB, twogroup)")
    sub.add_argument("--seed", type=int, help="Seed del run")
    sub.add_argument("--chains", type=int, help="Numero di catene indipendenti")
    sub.add_argument("--sweeps", type=int, help="Sweep per catena")
    sub.add_argument("--burnin", type=int, help="Sweep di burn-in non scritte")
    sub.add_argument("--thin", type=int, help="Scrive una sweep ogni THIN")
    sub.add_argument("--sampler", type=str, help="conditional o marginal")
    sub.add_argument("--out", type=str, help="Directory di output")
    sub.add_argument("--grid", type=str, help="CSV della griglia (data.grid)")
    sub.add_argument("--data", type=str, help="CSV delle osservazioni (data.values)")


def _load_run_config(args):
    from src.models.run_config import RunConfig

    overrides = {
        "seed": args.seed,
        "chains": args.chains,
        "sweeps": args.sweeps,
        "burnin": args.burnin,
        "trace.thin": args.thin,
        "sampler": args.sampler,
        "out": args.out,
        "data.grid": args.grid,
        "data.values": args.data,
    }
    return RunConfig.load(preset=args.preset, config_path=args.config, overrides=overrides)


def run_command(args, parser: argparse.ArgumentParser) -> int:
    """Esegue il sottocomando e restituisce il codice di uscita."""
    if args.command == "simulate":
        from src.simulation.pipeline import run_simulate
        logger.info(f"Avvio simulazione del preset {args.preset} (seed {args.seed})")
        run_simulate(args.preset, args.seed, args.out, subjects=args.subjects, horizon=args.horizon, split=args.split)

    elif args.command == "fit":
        from src.inference.pipeline import run_fit
        run_fit(_load_run_config(args))

    elif args.command == "summarize":
        from src.analysis.pipeline import run_summarize
        from src.utils.config import SUMMARY_BURNIN_FRACTION, SUMMARY_THIN
        out_dir = args.out or os.path.join(args.trace, "summary")
        logger.info(f"Avvio riassunto di {args.trace}")
        run_summarize(
            args.trace,
            out_dir,
            burnin_fraction=SUMMARY_BURNIN_FRACTION if args.burnin_fraction is None else args.burnin_fraction,
            thin=SUMMARY_THIN if args.thin is None else args.thin,
            interval=args.interval,
            alignment=args.alignment,
        )

    elif args.command == "moments":
        from src.analysis.pipeline import run_moments
        from src.utils.config import MC_REPLICATES, MC_TRUNCATION
        table = run_moments(
            variant=args.variant,
            sigma2=args.sigma2,
            omega=args.omega,
            distance=args.distance,
            gamma=args.gamma,
            alpha=args.alpha,
            event=args.event,
            L=args.truncation or MC_TRUNCATION,
            R=args.replicates or MC_REPLICATES,
            seed=args.seed,
            out_path=args.out,
        )
        table.to_csv(sys.stdout, index=False)

    elif args.command == "selfcheck":
        from src.analysis.selfcheck import run_selfcheck
        results = run_selfcheck(args.out, seed=args.seed)
        return 0 if results["passed"].all() else 1

    elif args.command == "sensitivity":
        from src.analysis.pipeline import run_sensitivity
        config = _load_run_config(args)
        if not config.data_grid or not config.data_values:
            raise ConfigError("'data.grid' e 'data.values' sono obbligatori per sensitivity")
        run_sensitivity(config, args.omegas, args.target_k)

    else:
        parser.print_help()
    return 0


def main() -> int:
    """
    Entry point principale.

    Gestisce i comandi CLI:
    - simulate: genera i dataset A, B o twogroup
    - fit: esegue le catene MCMC
    - summarize: riassume le tracce
    - moments: confronta i momenti in forma chiusa con il Monte Carlo
    - selfcheck: esegue la suite di oracoli
    - sensitivity: ripete il fit per diversi ω

    Gli errori del progetto terminano con il codice associato e un JSON su stderr.
    """
    parser = build_parser()
    args = parser.parse_args()
    setup_logging(logging.DEBUG if args.verbose else logging.INFO)
    try:
        return run_command(args, parser)
    except NHDPError as e:
        logger.error(f"✗ {type(e).__name__}: {e}")
        print(e.to_json(), file=sys.stderr)
        return e.exit_code
    except Exception:
        logger.exception("✗ Errore inatteso")
        return 1


if __name__ == "__main__":
    sys.exit(main())
