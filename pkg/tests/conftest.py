import json

import pytest
import torch

from ctxrank import context as ctx
from ctxrank import models as mdl
from ctxrank import synthetic as syn
from ctxrank.corpus import load_dataset
from ctxrank.encoder import EncoderConfig, TokenizerConfig

torch.set_num_threads(2)

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def tiny_tok():
    return TokenizerConfig(vocab_size=2048)


@pytest.fixture(scope="session")
def tiny_enc():
    return EncoderConfig(layers=2, hidden_dim=64, heads=4, ffn_dim=128, max_len=96)


def synthetic_examples(n_questions, seed, local_k=1, h=3, budget=32,
                       scorer="ngram", encoder=None, token_counter=None):
    """Generate a synthetic split and attach context bundles."""
    docs, qa = syn.generate(syn.SyntheticConfig(questions=n_questions, seed=seed))
    corpus, instances = load_dataset(
        [json.dumps(d) for d in docs], [json.dumps(r) for r in qa])
    local_cfg = ctx.LocalContextConfig(k=local_k)
    global_cfg = ctx.GlobalContextConfig(h=h, token_budget=budget, scorer=scorer)
    examples = [
        mdl.Example.from_instance(
            corpus, inst,
            ctx.build_bundle(corpus, inst, local_cfg, global_cfg, encoder,
                             token_counter=token_counter))
        for inst in instances
    ]
    return corpus, instances, examples
