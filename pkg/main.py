"""
=============================================================================
MBART SENSIBILIDADE - Analise de sensibilidade causal com BART monotono
=============================================================================

Este script expoe o pipeline em subcomandos:
1. fit:       ajusta a forma reduzida (BART) e grava o artefato de draws
2. project:   projeta os draws em cada densidade f(u) -> tabela de ACRR
3. evalue:    compara tau projetado com o E-value por observacao
4. simulate:  roda as tabelas de validacao por simulacao
5. subgroup:  arvore de subgrupos sobre os efeitos individuais
6. diagnose:  n_eff e Geweke das cadeias

O ajuste roda uma vez; project/evalue/subgroup/diagnose so leem o artefato.

Uso:
    python main.py fit --data dados.csv --config analise.toml
    python main.py project --config analise.toml --mode per-draw --draws 500
    python main.py simulate --table bivariate --n 25000
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from artefatos import (
    NOME_PADRAO,
    carregar_csv_longo,
    carregar_draws,
    escrever_tabela,
    exportar_csv_longo,
    salvar_draws,
)
from configuracao import RunConfig, aplicar_flags, carregar_config
from diagnostics import autocorrelation_frame, diagnose_draws, summarize, trace_frame
from evalue import compare, evalue
from ingestao import ingest_csv
from projection import project_posterior, results_table, unit_posteriors
from reduced_form import fit_reduced_form
from simulation import TABELAS, run_table
from subgroup import fit_cart, leaf_assignment, subgroup_difference

# =============================================================================
# CONFIGURACAO - CARREGA VARIAVEIS DE AMBIENTE
# =============================================================================

load_dotenv()

logger = logging.getLogger("mbart")


def _titulo(texto: str):
    print("=" * 60)
    print(texto)
    print("=" * 60)


def _cabecalho_csv(config: RunConfig, **extra) -> dict:
    cabecalho = {"seed": config.seed, "threads": config.threads}
    cabecalho.update({k: v for k, v in extra.items() if v is not None})
    return cabecalho


def _caminho_artefato(args, config: RunConfig) -> Path:
    return Path(args.artifact) if args.artifact else config.output_dir / NOME_PADRAO


def _carregar(args, config: RunConfig):
    caminho = _caminho_artefato(args, config)
    print(f"\n[1] Lendo artefato: {caminho}")
    # Aceita tambem a exportacao longa gerada por fit --csv
    draws = carregar_csv_longo(caminho) if caminho.suffix.lower() == ".csv" else carregar_draws(caminho)
    print(f"   - {draws.n_draws} draws x {draws.n_obs} observacoes (semente do ajuste: {draws.metadata.get('seed')})")
    return draws


def _projetar(draws, config: RunConfig, passo: int = 2):
    spec = config.sensitivity_spec()
    print(f"\n[{passo}] Projetando em {len(spec.densities)} densidade(s) (modo {config.mode})...")
    resultados = project_posterior(
        draws, spec, mode=config.mode, n_subsample=config.n_subsample,
        seed=config.seed, threads=config.threads,
    )
    for r in resultados:
        s = r.summary()
        print(f"   - {r.label:<36} ACRR={s['acrr_mean']:.3f} [{s['acrr_2.5']:.3f}, {s['acrr_97.5']:.3f}]")
    return resultados


# =============================================================================
# SUBCOMANDOS
# =============================================================================

def cmd_fit(args, config: RunConfig) -> int:
    _titulo("AJUSTE DA FORMA REDUZIDA")

    print(f"\n[1] Lendo dados: {args.data}")
    dados = ingest_csv(args.data, config.schema)
    resumo = dados.resumo()
    print(f"   - {resumo['n']} observacoes, {resumo['p']} covariaveis")
    print(f"   - {resumo['tratados']} tratados, {resumo['desfechos']} desfechos")
    for coluna, qtd in resumo["imputados"].items():
        print(f"   - AVISO: {qtd} valor(es) ausente(s) em '{coluna}' imputados com 0")

    b = config.bart
    print(f"\n[2] Ajustando BART ({b.n_trees} arvores, {b.burn_in} burn-in, {b.n_draws} draws)...")
    draws = fit_reduced_form(dados, b, seed=config.seed, threads=config.threads)

    caminho = salvar_draws(draws, _caminho_artefato(args, config))
    print(f"\n[3] Artefato gravado: {caminho}")
    if args.csv:
        csv = exportar_csv_longo(draws, caminho.with_suffix(".csv"))
        print(f"   - Exportacao CSV: {csv}")

    print("\n" + "=" * 60)
    print("AJUSTE CONCLUIDO!")
    print("=" * 60)
    return 0


def cmd_project(args, config: RunConfig) -> int:
    _titulo("PROJECAO DE SENSIBILIDADE")
    draws = _carregar(args, config)
    resultados = _projetar(draws, config)

    tabela = escrever_tabela(
        results_table(resultados),
        config.output_dir / "sensibilidade.csv",
        _cabecalho_csv(config, mode=config.mode, draws=config.n_subsample),
    )
    unidades = pd.concat(
        [unit_posteriors(draws, r).assign(density=r.label) for r in resultados],
        ignore_index=True,
    )
    arquivo_unidades = escrever_tabela(unidades, config.output_dir / "unidades.csv", _cabecalho_csv(config, mode=config.mode))

    print("\n[3] Tabelas gravadas:")
    print(f"   - {tabela}")
    print(f"   - {arquivo_unidades}")
    return 0


def cmd_evalue(args, config: RunConfig) -> int:
    _titulo("COMPARACAO COM E-VALUES")
    draws = _carregar(args, config)
    rr_medio = draws.rr_obs().mean(axis=0)
    rr_medio = rr_medio[np.isfinite(rr_medio)]
    if rr_medio.size:
        geral = evalue(float(rr_medio.mean()))
        nota = " (RR < 1 invertida)" if geral.invertido else ""
        print(f"   - RR observado medio {geral.rr_obs:.3f} -> E-value {geral.evalue:.3f}{nota}")
    resultados = _projetar(draws, config)

    tabela = pd.concat(
        [compare(draws, r).assign(density=r.label) for r in resultados],
        ignore_index=True,
    )
    caminho = escrever_tabela(tabela, config.output_dir / "evalue.csv", _cabecalho_csv(config, mode=config.mode))
    print(f"\n[3] Tabela gravada: {caminho}")
    return 0


def cmd_simulate(args, config: RunConfig) -> int:
    _titulo(f"SIMULACAO: TABELA {args.table.upper()}")
    b = config.bart
    print(f"\n[1] n={args.n}, {b.n_trees} arvores, {b.burn_in} burn-in, {b.n_draws} draws, semente={config.seed}")

    tabela = run_table(args.table, args.n, b, config.seed, config.threads)
    caminho = escrever_tabela(
        tabela,
        config.output_dir / f"simulacao_{args.table}.csv",
        _cabecalho_csv(config, table=args.table, n=args.n),
    )
    print(f"\n[2] Tabela gravada: {caminho}")
    print(tabela.to_string(index=False, float_format=lambda v: f"{v:.3f}"))
    return 0


def cmd_subgroup(args, config: RunConfig) -> int:
    _titulo("ANALISE DE SUBGRUPOS")
    draws = _carregar(args, config)
    if draws.X is None:
        raise ValueError("O artefato nao contem as covariaveis; reajuste com 'fit'")
    resultados = _projetar(draws, config)

    atributo = {"tau": "tau", "delta": "delta", "pdo0": "pDo0"}[config.response]
    referencia = getattr(resultados[0], atributo)
    print(f"\n[3] Ajustando arvore em '{config.response}' (densidade {resultados[0].label})...")
    arvore = fit_cart(
        draws.X, referencia.mean(axis=0),
        max_depth=config.max_depth, min_leaf=config.min_leaf,
        feature_names=draws.feature_names,
    )
    print(arvore.to_text())

    saida = config.output_dir
    saida.mkdir(parents=True, exist_ok=True)
    (saida / "arvore.txt").write_text(arvore.to_text() + "\n", encoding="utf-8")
    (saida / "arvore.json").write_text(arvore.to_json() + "\n", encoding="utf-8")
    folhas = pd.DataFrame({
        "obs": np.arange(draws.n_obs),
        "leaf": leaf_assignment(arvore, draws.n_obs),
        "fitted": arvore.predict(draws.X),
    })
    if draws.labels is not None:
        folhas.insert(1, "label", list(draws.labels))
    escrever_tabela(folhas, saida / "subgrupos_folhas.csv", _cabecalho_csv(config, response=config.response))

    colunas = {}
    linhas = []
    for r in resultados:
        diferenca = subgroup_difference(arvore, getattr(r, atributo))
        if diferenca.degenerate:
            print("   - AVISO: arvore com uma unica folha, sem diferenca entre subgrupos")
            break
        colunas[r.label] = diferenca.values
        linhas.append({"density": r.label, **diferenca.summary()})

    if colunas:
        posteriori = pd.DataFrame(colunas)
        escrever_tabela(posteriori, saida / "subgrupos_draws.csv", _cabecalho_csv(config, response=config.response))
        escrever_tabela(pd.DataFrame(linhas), saida / "subgrupos.csv", _cabecalho_csv(config, response=config.response))
        for linha in linhas:
            print(f"   - {linha['density']:<36} diferenca={linha['mean']:.3f} [{linha['2.5']:.3f}, {linha['97.5']:.3f}]")
    print(f"\n[4] Resultados gravados em {saida}")
    return 0


def cmd_diagnose(args, config: RunConfig) -> int:
    _titulo("DIAGNOSTICOS MCMC")
    draws = _carregar(args, config)

    print(f"\n[2] Monitorando ate {config.n_monitor} observacoes...")
    tabela = diagnose_draws(draws, config.n_monitor, seed=config.seed)
    resumo = summarize(tabela)
    print(resumo.to_string(index=False, float_format=lambda v: f"{v:.3f}"))

    saida = config.output_dir
    cab = _cabecalho_csv(config, n_monitor=config.n_monitor)
    escrever_tabela(tabela, saida / "diagnosticos.csv", cab)
    escrever_tabela(resumo, saida / "diagnosticos_resumo.csv", cab)
    exemplos = sorted(tabela["obs"].unique())[: args.n_trace]
    escrever_tabela(trace_frame(draws, exemplos), saida / "diagnosticos_traco.csv", cab)
    escrever_tabela(autocorrelation_frame(draws, exemplos), saida / "diagnosticos_acf.csv", cab)
    print(f"\n[3] Resultados gravados em {saida}")
    return 0


# =============================================================================
# ARGUMENTOS
# =============================================================================

def criar_parser() -> argparse.ArgumentParser:
    comum = argparse.ArgumentParser(add_help=False)
    comum.add_argument("--config", help="Arquivo TOML de configuracao")
    comum.add_argument("--seed", type=int, help="Semente mestre (padrao: MBART_SEED ou 2024)")
    comum.add_argument("--threads", type=int, help="Paralelismo (padrao: MBART_THREADS ou 1)")
    comum.add_argument("--output-dir", help="Diretorio de saida (padrao: MBART_OUTPUT_DIR ou resultados)")
    comum.add_argument("-v", "--verbose", action="store_true", help="Mostra o log de progresso")

    bart = argparse.ArgumentParser(add_help=False)
    bart.add_argument("--trees", type=int, dest="bart_n_trees", help="Numero de arvores")
    bart.add_argument("--burn-in", type=int, dest="bart_burn_in", help="Iteracoes de burn-in")
    bart.add_argument("--draws", type=int, dest="bart_n_draws", help="Draws guardados apos o burn-in")

    artefato = argparse.ArgumentParser(add_help=False)
    artefato.add_argument("--artifact", help=f"Artefato de draws (padrao: <output-dir>/{NOME_PADRAO})")

    projecao = argparse.ArgumentParser(add_help=False)
    projecao.add_argument("--mode", choices=["per-draw", "mean-only"], help="Modo de projecao")
    projecao.add_argument("--draws", type=int, dest="n_subsample", help="Draws subamostrados na projecao")

    parser = argparse.ArgumentParser(
        prog="main.py",
        description="Analise de sensibilidade causal com BART monotono",
    )
    sub = parser.add_subparsers(dest="comando", required=True)

    p = sub.add_parser("fit", parents=[comum, bart, artefato], help="Ajusta a forma reduzida")
    p.add_argument("--data", required=True, help="CSV com G, B e covariaveis")
    p.add_argument("--csv", action="store_true", help="Exporta tambem os draws em CSV longo")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("project", parents=[comum, artefato, projecao], help="Projeta nas densidades f(u)")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("evalue", parents=[comum, artefato, projecao], help="Compara com E-values")
    p.set_defaults(func=cmd_evalue)

    p = sub.add_parser("simulate", parents=[comum, bart], help="Tabelas de validacao por simulacao")
    p.add_argument("--table", required=True, choices=sorted(TABELAS), help="Tabela a gerar")
    p.add_argument("--n", type=int, default=25000, help="Observacoes por conjunto simulado")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("subgroup", parents=[comum, artefato, projecao], help="Arvore de subgrupos")
    p.add_argument("--response", choices=["tau", "delta", "pdo0"], help="Resposta da arvore")
    p.add_argument("--max-depth", type=int, help="Profundidade maxima (padrao 3)")
    p.add_argument("--min-leaf", type=int, help="Tamanho minimo de folha (padrao max(50, n/100))")
    p.set_defaults(func=cmd_subgroup)

    p = sub.add_parser("diagnose", parents=[comum, artefato], help="Diagnosticos de convergencia")
    p.add_argument("--n-monitor", type=int, help="Observacoes monitoradas (padrao 1000)")
    p.add_argument("--n-trace", type=int, default=5, help="Observacoes exportadas nos tracos")
    p.set_defaults(func=cmd_diagnose)

    return parser


def _config_da_execucao(args) -> RunConfig:
    config = carregar_config(args.config)
    flags = {
        "seed": args.seed,
        "threads": args.threads,
        "output_dir": Path(args.output_dir) if args.output_dir else None,
    }
    for nome in ("mode", "n_subsample", "response", "max_depth", "min_leaf", "n_monitor",
                 "bart_n_trees", "bart_burn_in", "bart_n_draws"):
        flags[nome] = getattr(args, nome, None)
    return aplicar_flags(config, **flags)


def main(argv: Optional[List[str]] = None) -> int:
    args = criar_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        config = _config_da_execucao(args)
        return args.func(args, config)
    except FileNotFoundError as e:
        print(f"\nERRO: {e}")
        return 1
    except ValueError as e:
        print(f"\nERRO: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
