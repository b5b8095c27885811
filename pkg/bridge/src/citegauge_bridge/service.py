"""FastAPI service implementing the citegauge wire protocol.

Endpoints: POST /generate, /nli, /embed, /translate, /saliency and GET
/health. Field names follow the protocol bit-exactly; tensors travel as
.tdmp file references under the configured dump directory. The /generate
endpoint always serves the generator binding — to expose a frozen
reference policy, run a second instance whose generator binding is that
checkpoint.
"""

from __future__ import annotations

import argparse
import tempfile
from typing import List, Optional

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .bindings import BindingSet, UnsupportedBinding, load_pretrained_binding
from .generation import embed_texts, generate_response, nli_probs, translate_text
from .saliency import DEFAULT_IG_STEPS, dump_saliency


class GenerateIn(BaseModel):
    prompt: str
    temperature: float = 0.0
    max_new_tokens: int = 128
    seed: Optional[int] = None
    want_logprobs: bool = False
    want_attentions: bool = False


class NliIn(BaseModel):
    premise: str
    hypothesis: str


class EmbedIn(BaseModel):
    texts: List[str]


class TranslateIn(BaseModel):
    text: str
    source_lang: str = "en"
    target_lang: str = "hi"


class SaliencyIn(BaseModel):
    prompt: str
    target_text: str
    steps: int = DEFAULT_IG_STEPS


def create_app(bindings: BindingSet, dump_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="citegauge-bridge")
    dumps = dump_dir or tempfile.mkdtemp(prefix="citegauge_tdmp_")
    saliency_count = {"n": 0}

    @app.exception_handler(UnsupportedBinding)
    async def unsupported(request, exc):
        return JSONResponse(status_code=400, content={"error": "UnsupportedBinding", "message": str(exc)})

    @app.get("/health")
    def health():
        return bindings.manifest()

    @app.post("/generate")
    def generate(body: GenerateIn):
        return generate_response(
            bindings.require("generator"),
            prompt=body.prompt,
            temperature=body.temperature,
            max_new_tokens=body.max_new_tokens,
            seed=body.seed,
            want_logprobs=body.want_logprobs,
            want_attentions=body.want_attentions,
            dump_dir=dumps,
        )

    @app.post("/nli")
    def nli(body: NliIn):
        return nli_probs(bindings.require("nli"), body.premise, body.hypothesis)

    @app.post("/embed")
    def embed(body: EmbedIn):
        return {"embeddings": embed_texts(bindings.require("embedder"), body.texts)}

    @app.post("/translate")
    def translate(body: TranslateIn):
        return {"text": translate_text(bindings.require("translator"), body.text)}

    @app.post("/saliency")
    def saliency(body: SaliencyIn):
        saliency_count["n"] += 1
        path = f"{dumps}/saliency_{saliency_count['n']:06d}.tdmp"
        ref = dump_saliency(
            bindings.require("generator"), body.prompt, body.target_text, path, steps=body.steps
        )
        return {"saliency_dump_ref": ref}

    return app


def serve(bindings: BindingSet, port: int, dump_dir: Optional[str] = None) -> None:
    import uvicorn

    uvicorn.run(create_app(bindings, dump_dir=dump_dir), host="0.0.0.0", port=port)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="citegauge-bridge")
    parser.add_argument("--port", type=int, default=8811)
    parser.add_argument("--dump-dir", default=None)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--tiny", action="store_true", help="serve random tiny models (demo/tests)")
    parser.add_argument("--tiny-decoder-only", action="store_true",
                        help="tiny models with a decoder-only generator")
    for role in ("generator", "reference", "nli", "embedder", "translator"):
        parser.add_argument(f"--{role}-model", default=None, help=f"checkpoint id for {role}")
    args = parser.parse_args(argv)

    if args.tiny or args.tiny_decoder_only:
        from .tiny import build_tiny_bindings

        bindings = build_tiny_bindings(decoder_only_generator=args.tiny_decoder_only)
    else:
        loaded = []
        for role in ("generator", "reference", "nli", "embedder", "translator"):
            model_id = getattr(args, f"{role}_model")
            if model_id:
                loaded.append(load_pretrained_binding(role, model_id, device=args.device))
        if not loaded:
            parser.error("no bindings: pass --tiny or at least one --<role>-model")
        bindings = BindingSet(loaded)

    serve(bindings, args.port, dump_dir=args.dump_dir)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
