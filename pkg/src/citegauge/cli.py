"""Command-line entry point: dataset prep, evaluation, GRPO driving, XAI analysis.

Backends are addressed by URL; http(s):// URLs talk the wire protocol while
mock:NAME URLs build the deterministic in-process mocks, so every command
can run end to end without a serving stack. All commands are deterministic
under a fixed seed and mock backends. Exit codes: 0 success, 1 internal
error, 2 usage/input error; failures print one machine-readable JSON object
to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

try:
    import tomllib  # py >= 3.11
except ImportError:  # pragma: no cover - py 3.10 path
    import tomli as tomllib

from . import reward as reward_mod
from .backends import ENV_BACKEND_URL, BackendEndpoint, GenerationRequest, HttpBackend
from .citemetrics import citation_score, corpus_citation_f1, parse_citations
from .corpus import (
    DialogueExample,
    MixtureSpec,
    build_prompt,
    detect_language,
    guard_translate,
    read_jsonl,
    sample_mixture,
    write_jsonl,
)
from .errors import (
    BackendError,
    CitegaugeError,
    EmptyCorpus,
    EmptyPool,
    IndexGap,
    MalformedRecord,
    NoCitations,
)
from .mocks import make_mock
from .report import StageResult, emit_series
from .reward import RewardWeights, grpo_rollout_step
from .semqual import fact_score, hallucination_flag, semantic_score
from .textmetrics import bleu, rouge1, rougeL, tokenize
from .xai import (
    attention_alignment,
    cited_token_indices,
    occlusion_grounding,
    read_tensor_dump,
    saliency_summary,
)

_INPUT_ERRORS = (FileNotFoundError, MalformedRecord, IndexGap, EmptyCorpus, EmptyPool, ValueError)


@dataclass
class RunConfig:
    """Merged run settings: defaults < config file < command-line flags."""

    dataset: Optional[str] = None
    out: Optional[str] = None
    backend_url: Optional[str] = None
    ref_backend_url: Optional[str] = None
    nli_url: Optional[str] = None
    embed_url: Optional[str] = None
    translate_url: Optional[str] = None
    mix: float = 0.4
    seed: int = 0
    steps: int = reward_mod.DEFAULT_STEPS
    group_size: int = reward_mod.DEFAULT_GROUP_SIZE
    beta: float = reward_mod.DEFAULT_BETA
    temperature: float = reward_mod.DEFAULT_TEMPERATURE
    tau: float = 0.5
    subset: int = 100
    format: str = "jsonl"
    model_name: str = "model"
    stage: str = "baseline"
    max_new_tokens: int = 128

    @classmethod
    def merge(cls, args: argparse.Namespace) -> "RunConfig":
        config = cls()
        file_values = {}
        if getattr(args, "config", None):
            with open(args.config, "rb") as fh:
                file_values = tomllib.load(fh)
        for name in vars(config):
            if name in file_values:
                setattr(config, name, file_values[name])
            flag = getattr(args, name, None)
            if flag is not None:
                setattr(config, name, flag)
        return config


def _fail(exc: BaseException, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload, ensure_ascii=False), file=sys.stderr)
    return code


def _make_backend(url: Optional[str], dump_dir=None, role: str = "backend"):
    if not url:
        raise ValueError(f"no URL configured for {role}")
    if url.startswith("mock:"):
        return make_mock(url, dump_dir=dump_dir)
    if url.startswith("http://") or url.startswith("https://"):
        return HttpBackend(BackendEndpoint(base_url=url))
    raise ValueError(f"unsupported backend URL {url!r} for {role}")


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")


def _write_jsonl_rows(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False))
            fh.write("\n")


# -- format --------------------------------------------------------------------

def cmd_format(args: argparse.Namespace) -> int:
    config = RunConfig.merge(args)
    examples = read_jsonl(config.dataset)
    out = Path(config.out)

    if args.prompts:
        rows = [{"id": ex.id, "prompt": build_prompt(ex)} for ex in examples]
        _write_jsonl_rows(out, rows)
        return 0

    if args.translate:
        translator = _make_backend(config.translate_url, role="translator")
        translated = []
        for ex in examples:
            translated.append(
                DialogueExample(
                    id=ex.id,
                    query=guard_translate(ex.query, translator, ex.language, args.target_lang),
                    knowledge=ex.knowledge,
                    reference=guard_translate(
                        ex.reference, translator, ex.language, args.target_lang
                    ),
                    language=args.target_lang,
                    source=ex.source,
                    metadata=dict(ex.metadata),
                )
            )
        write_jsonl(translated, out)
        return 0

    if args.mix is not None:
        en_pool = [ex for ex in examples if ex.language == "en"]
        hi_pool = [ex for ex in examples if ex.language == "hi"]
        spec = MixtureSpec(alpha_en=args.mix, seed=config.seed)
        count = args.count or len(examples)
        write_jsonl(sample_mixture(en_pool, hi_pool, spec, count), out)
        return 0

    write_jsonl(examples, out)
    return 0


# -- eval ----------------------------------------------------------------------

def _load_predictions(path) -> dict[str, str]:
    predictions = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            predictions[str(row["id"])] = str(row["response"])
    return predictions


def _example_metrics(example, response, nli, embedder, tau) -> dict:
    pred_cit = parse_citations(response)
    gold_cit = parse_citations(example.reference)
    cand = tokenize(response, example.language)
    ref = tokenize(example.reference, example.language)
    return {
        "bleu": bleu([cand], [ref]),
        "rouge1": rouge1(cand, ref),
        "rougeL": rougeL(cand, ref),
        "factscore": fact_score(response, example.knowledge, nli),
        "citation_f1": citation_score(pred_cit, gold_cit).f1,
        "halluc_rate": float(
            hallucination_flag(response, example.knowledge, pred_cit, nli, tau=tau)
        ),
        "semantic": semantic_score(response, example.reference, embedder),
    }


def cmd_eval(args: argparse.Namespace) -> int:
    config = RunConfig.merge(args)
    examples = read_jsonl(config.dataset)
    if not examples:
        raise EmptyCorpus(f"dataset {config.dataset} holds no examples")
    out_dir = Path(config.out)
    nli = _make_backend(config.nli_url, role="nli")
    embedder = _make_backend(config.embed_url, role="embed")

    responses: dict[str, str] = {}
    failed: list[str] = []
    if args.predictions:
        predictions = _load_predictions(args.predictions)
        missing = [ex.id for ex in examples if ex.id not in predictions]
        if missing:
            raise ValueError(f"predictions missing ids: {missing[:5]}")
        responses = {ex.id: predictions[ex.id] for ex in examples}
    else:
        gen = _make_backend(config.backend_url, role="generator")
        for ex in examples:
            try:
                resp = gen.generate(
                    GenerationRequest(
                        prompt=build_prompt(ex),
                        temperature=0.0,
                        max_new_tokens=config.max_new_tokens,
                        seed=config.seed,
                    )
                )
            except BackendError:
                failed.append(ex.id)
                continue
            responses[ex.id] = resp.text

    per_example = []
    grouped: dict[str, list] = {"overall": [], "en": [], "hi": []}
    for ex in examples:
        if ex.id not in responses:
            continue
        response = responses[ex.id]
        metrics = _example_metrics(ex, response, nli, embedder, config.tau)
        detected = detect_language(ex.query) if ex.query.strip() else ex.language
        row = {"id": ex.id, "language": detected, **metrics}
        per_example.append(row)
        grouped["overall"].append((ex, response, metrics))
        grouped[detected].append((ex, response, metrics))

    results = []
    for group in ("overall", "en", "hi"):
        members = grouped[group]
        if not members:
            continue
        cands = [tokenize(resp, ex.language) for ex, resp, _ in members]
        refs = [tokenize(ex.reference, ex.language) for ex, _, _ in members]
        cite_pairs = [
            (parse_citations(resp), parse_citations(ex.reference), len(ex.knowledge))
            for ex, resp, _ in members
        ]
        n = len(members)
        metrics = {
            "bleu": bleu(cands, refs),
            "rouge1": sum(m["rouge1"] for _, _, m in members) / n,
            "rougeL": sum(m["rougeL"] for _, _, m in members) / n,
            "factscore": sum(m["factscore"] for _, _, m in members) / n,
            "citation_f1": corpus_citation_f1(cite_pairs).f1,
            "halluc_rate": sum(m["halluc_rate"] for _, _, m in members) / n,
            "semantic": sum(m["semantic"] for _, _, m in members) / n,
        }
        results.append(
            StageResult(model=config.model_name, stage=config.stage, language=group, metrics=metrics)
        )

    _write_jsonl_rows(out_dir / "per_example.jsonl", per_example)
    emit_series(results, out_dir / f"results.{config.format}", format=config.format)
    _write_json(
        out_dir / "manifest.json",
        {"completed": sorted(responses), "failed": sorted(failed)},
    )
    return 0


# -- grpo ------------------------------------------------------------------------

def cmd_grpo(args: argparse.Namespace) -> int:
    config = RunConfig.merge(args)
    examples = read_jsonl(config.dataset)
    if not examples:
        raise EmptyCorpus(f"dataset {config.dataset} holds no examples")
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / "records.jsonl"
    state_path = out_dir / "state.json"

    gen = _make_backend(config.backend_url, role="generator")
    ref = _make_backend(config.ref_backend_url or config.backend_url, role="reference")
    nli = _make_backend(config.nli_url, role="nli")
    weights = RewardWeights()

    start = 1
    mode = "w"
    if args.resume and state_path.exists():
        with open(state_path, "r", encoding="utf-8") as fh:
            start = json.load(fh)["completed_step"] + 1
        mode = "a"

    with open(records_path, mode, encoding="utf-8") as fh:
        for step in range(start, config.steps + 1):
            records, _ = grpo_rollout_step(
                examples,
                gen,
                ref,
                nli,
                weights,
                step=step,
                group_size=config.group_size,
                temperature=config.temperature,
                beta=config.beta,
                seed=config.seed,
                tau=config.tau,
                total_steps=config.steps,
            )
            for record in records:
                fh.write(json.dumps(record.to_wire(), ensure_ascii=False))
                fh.write("\n")
            fh.flush()
            _write_json(state_path, {"completed_step": step})
    return 0


# -- xai ---------------------------------------------------------------------------

def cmd_xai(args: argparse.Namespace) -> int:
    config = RunConfig.merge(args)
    examples = read_jsonl(config.dataset)
    if not examples:
        raise EmptyCorpus(f"dataset {config.dataset} holds no examples")
    examples = examples[: config.subset]
    out_dir = Path(config.out)
    dumps_dir = out_dir / "dumps"
    gen = _make_backend(config.backend_url, dump_dir=dumps_dir, role="generator")

    rows = []
    for ex in examples:
        prompt = build_prompt(ex)
        resp = gen.generate(
            GenerationRequest(
                prompt=prompt,
                temperature=0.0,
                max_new_tokens=config.max_new_tokens,
                seed=config.seed,
                want_attentions=True,
            )
        )
        cited = sorted(
            i for i in parse_citations(resp.text).index_set() if 1 <= i <= len(ex.knowledge)
        )

        alignment = None
        if resp.attention_dump_ref:
            dump = read_tensor_dump(resp.attention_dump_ref)
            tokens = cited_token_indices(prompt, cited, dump.input_token_spans)
            alignment = attention_alignment(dump, tokens)

        try:
            grounding_result = occlusion_grounding(ex, gen, max_new_tokens=config.max_new_tokens)
            grounding = {
                "total_citations": grounding_result.total_citations,
                "disappeared": grounding_result.disappeared,
                "score": grounding_result.score,
            }
        except NoCitations:
            grounding = None

        saliency = None
        if args.saliency_dir:
            dump_path = Path(args.saliency_dir) / f"{ex.id}.tdmp"
            if dump_path.exists():
                summary = saliency_summary(read_tensor_dump(dump_path))
                saliency = {
                    "entropy": summary.entropy if summary.defined else None,
                    "concentration": summary.concentration if summary.defined else None,
                    "defined": summary.defined,
                }

        rows.append(
            {"id": ex.id, "alignment": alignment, "grounding": grounding, "saliency": saliency}
        )

    _write_jsonl_rows(out_dir / "xai.jsonl", rows)
    return 0


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="citegauge",
        description="Evaluate, reward, and interpret citation-grounded dialogue responses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--dataset", required=True, help="input dataset JSONL")
        p.add_argument("--out", required=True, help="output file or directory")
        p.add_argument("--config", help="TOML config file; flags override it")
        p.add_argument("--seed", type=int, default=None)

    p_format = sub.add_parser("format", help="build prompts, translate, or mix datasets")
    common(p_format)
    p_format.add_argument("--prompts", action="store_true", help="emit structured prompts")
    p_format.add_argument("--mix", type=float, default=None, help="English mixture fraction")
    p_format.add_argument("--count", type=int, default=None, help="mixture draw count")
    p_format.add_argument("--translate", action="store_true", help="translate with marker guard")
    p_format.add_argument("--translate-url", dest="translate_url", default=None)
    p_format.add_argument("--target-lang", default="hi", choices=["en", "hi"])
    p_format.set_defaults(func=cmd_format)

    p_eval = sub.add_parser("eval", help="compute all metric families over a dataset")
    common(p_eval)
    p_eval.add_argument("--predictions", help="JSONL of {id, response}; omit to --generate")
    p_eval.add_argument("--generate", action="store_true", help="generate via backend")
    p_eval.add_argument("--backend-url", dest="backend_url", default=None)
    p_eval.add_argument("--nli-url", dest="nli_url", default=None)
    p_eval.add_argument("--embed-url", dest="embed_url", default=None)
    p_eval.add_argument("--tau", type=float, default=None)
    p_eval.add_argument("--model-name", dest="model_name", default=None)
    p_eval.add_argument("--stage", default=None, choices=["baseline", "s1", "s2", "s3", "s4"])
    p_eval.add_argument("--format", default=None, choices=["csv", "jsonl"])
    p_eval.set_defaults(func=cmd_eval)

    p_grpo = sub.add_parser("grpo", help="drive rollout steps and emit training records")
    common(p_grpo)
    p_grpo.add_argument("--backend-url", dest="backend_url", default=None)
    p_grpo.add_argument("--ref-backend-url", dest="ref_backend_url", default=None)
    p_grpo.add_argument("--nli-url", dest="nli_url", default=None)
    p_grpo.add_argument("--steps", type=int, default=None)
    p_grpo.add_argument("--group-size", dest="group_size", type=int, default=None)
    p_grpo.add_argument("--beta", type=float, default=None)
    p_grpo.add_argument("--temperature", type=float, default=None)
    p_grpo.add_argument("--tau", type=float, default=None)
    p_grpo.add_argument("--resume", action="store_true", help="continue from the last step")
    p_grpo.set_defaults(func=cmd_grpo)

    p_xai = sub.add_parser("xai", help="attention alignment, occlusion, saliency summaries")
    common(p_xai)
    p_xai.add_argument("--backend-url", dest="backend_url", default=None)
    p_xai.add_argument("--subset", type=int, default=None, help="explainability subset size")
    p_xai.add_argument("--saliency-dir", dest="saliency_dir", default=None)
    p_xai.set_defaults(func=cmd_xai)

    return parser


def main(argv=None) -> int:
    import os

    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "backend_url", None) is None and os.environ.get(ENV_BACKEND_URL):
        args.backend_url = os.environ[ENV_BACKEND_URL]
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        return _fail(exc, 2)
    except CitegaugeError as exc:
        return _fail(exc, 1)
    except Exception as exc:  # pragma: no cover - defensive
        return _fail(exc, 1)


if __name__ == "__main__":
    sys.exit(main())
