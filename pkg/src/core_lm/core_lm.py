import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..models.data_models import Expression
from ..models.vocabulary import ANSWER_SINGLE, ANSWER_MULTI, ANSWER_NONE, SEG
from ..sequence_assembly.sequence_assembly import AssembledPrompt, TAGS, TAG_IDS
from ..utils.config import LMConfig
from ..utils.errors import ConfigError, ContextOverflowError
from .tokenizer import WordTokenizer


def answer_text(expression: Expression) -> str:
    """Supervised answer: one [SEG] per target, then the explanation when there is one"""
    n = len(expression.target_ids)
    if n == 0:
        return f"{ANSWER_NONE} ."
    body = f"{ANSWER_SINGLE} {SEG}" if n == 1 else f"{ANSWER_MULTI} " + " ".join([SEG] * n)
    if expression.explanation:
        body = f"{body} {expression.explanation}"
    return f"{body} ."


def parse_explanation(text: str) -> Optional[str]:
    """The 'because ...' clause of an answer, without the closing period"""
    words = text.split()
    if "because" not in words:
        return None
    clause = words[words.index("because"):]
    if "." in clause:
        clause = clause[: clause.index(".")]
    return " ".join(clause)


@dataclass
class SegQuery:
    embedding: torch.Tensor
    source_position: int


@dataclass
class LMOutput:
    logits: torch.Tensor
    hidden: torch.Tensor
    loss: Optional[torch.Tensor] = None


@dataclass
class Generation:
    text: str
    answer_ids: List[int]
    explanation: Optional[str]
    seg_queries: List[SegQuery] = field(default_factory=list)
    truncated: bool = False


class CausalBlock(nn.Module):
    """Pre-norm self-attention block; the causal mask comes from the caller"""

    def __init__(self, d: int, n_heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(d)
        self.self_attn = nn.MultiheadAttention(d, n_heads, dropout=0.0, batch_first=True)
        self.norm2 = nn.LayerNorm(d)
        self.ffn = nn.Sequential(nn.Linear(d, 4 * d), nn.GELU(), nn.Linear(4 * d, d))

    def forward(self, x: torch.Tensor, attn_mask: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        attended = self.self_attn(h, h, h, attn_mask=attn_mask, need_weights=False)[0]
        x = x + attended
        return x + self.ffn(self.norm2(x))


class CoreLM(nn.Module):
    """Small causal transformer over assembled prompts; [SEG] hidden states become SegQueries"""

    def __init__(self, cfg: LMConfig, tokenizer: WordTokenizer):
        super().__init__()
        if len(tokenizer) > cfg.vocab_size:
            raise ConfigError(f"tokenizer has {len(tokenizer)} ids but vocab_size is {cfg.vocab_size}")
        self.cfg = cfg
        self.tokenizer = tokenizer
        self.token_embedding = nn.Embedding(cfg.vocab_size, cfg.d)
        self.position_embedding = nn.Embedding(cfg.context, cfg.d)
        self.tag_embedding = nn.Embedding(len(TAGS), cfg.d)
        self.blocks = nn.ModuleList([CausalBlock(cfg.d, cfg.n_heads) for _ in range(cfg.n_layers)])
        self.norm = nn.LayerNorm(cfg.d)
        self.lm_head = nn.Linear(cfg.d, cfg.vocab_size)
        self.seg_projection = nn.Linear(cfg.d, cfg.query_dim)
        self.logger = logging.getLogger(__name__)
        self._reset_parameters()

    def _reset_parameters(self):
        for embedding in (self.token_embedding, self.position_embedding, self.tag_embedding):
            nn.init.normal_(embedding.weight, std=0.02)
        # near-uniform initial predictions
        nn.init.normal_(self.lm_head.weight, std=0.02)
        nn.init.zeros_(self.lm_head.bias)

    def embed_ids(self, ids: List[int]) -> torch.Tensor:
        index = torch.as_tensor(ids, dtype=torch.long, device=self.token_embedding.weight.device)
        return self.token_embedding(index)

    def forward(self, tokens: torch.Tensor, tag_ids: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """(L, d) tokens and (L,) tags -> hidden (L, d), logits (L, vocab)"""
        L = tokens.shape[0]
        if L > self.cfg.context:
            raise ContextOverflowError(f"sequence of {L} tokens exceeds context {self.cfg.context}",
                                       {"total": L, "context": self.cfg.context})
        positions = torch.arange(L, device=tokens.device)
        x = tokens + self.position_embedding(positions) + self.tag_embedding(tag_ids)
        causal = torch.triu(torch.ones(L, L, dtype=torch.bool, device=tokens.device), diagonal=1)
        x = x.unsqueeze(0)
        for block in self.blocks:
            x = block(x, causal)
        hidden = self.norm(x).squeeze(0)
        return hidden, self.lm_head(hidden)

    def lm_forward(self, prompt: AssembledPrompt, targets: Optional[List[int]] = None) -> LMOutput:
        """Logits over the prompt; CE over the answer region when targets (or prompt.answer_start) are given"""
        tokens, tag_ids, ids = prompt.tokens, prompt.tag_ids(), list(prompt.token_ids)
        answer_start = prompt.answer_start
        if targets:
            answer_start = len(prompt)
            tokens = torch.cat([tokens, self.embed_ids(targets)], dim=0)
            tag_ids = torch.cat([tag_ids, tag_ids.new_full((len(targets),), TAG_IDS["text"])])
            ids = ids + list(targets)

        hidden, logits = self(tokens, tag_ids)
        loss = None
        if answer_start is not None and answer_start > 0:
            gold = torch.as_tensor(ids[answer_start:], dtype=torch.long, device=logits.device)
            loss = F.cross_entropy(logits[answer_start - 1:-1], gold)
        return LMOutput(logits=logits, hidden=hidden, loss=loss)

    def seg_queries(self, hidden: torch.Tensor, token_ids: List[int], start: int = 0) -> List[SegQuery]:
        """One SegQuery per [SEG] id at or after `start`"""
        seg_id = self.tokenizer.seg_id
        return [SegQuery(embedding=self.seg_projection(hidden[p]), source_position=p)
                for p in range(start, len(token_ids)) if token_ids[p] == seg_id]

    @torch.no_grad()
    def generate(self, prompt: AssembledPrompt, max_new_tokens: Optional[int] = None) -> Generation:
        """Greedy decoding until [EOS], the token cap or the context limit"""
        budget = min(max_new_tokens or self.cfg.max_new_tokens, self.cfg.context - len(prompt))
        tokens, tag_ids, ids = prompt.tokens, prompt.tag_ids(), list(prompt.token_ids)
        text_tag = TAG_IDS["text"]
        answer: List[int] = []
        finished = False
        for _ in range(max(budget, 0)):
            _, logits = self(tokens, tag_ids)
            next_id = int(logits[-1].argmax())
            if next_id == self.tokenizer.eos_id:
                finished = True
                break
            answer.append(next_id)
            ids.append(next_id)
            tokens = torch.cat([tokens, self.embed_ids([next_id])], dim=0)
            tag_ids = torch.cat([tag_ids, tag_ids.new_full((1,), text_tag)])

        if not finished:
            self.logger.warning(f"generation stopped after {len(answer)} tokens without [EOS]")

        queries: List[SegQuery] = []
        if self.tokenizer.seg_id in answer:
            hidden, _ = self(tokens, tag_ids)
            queries = self.seg_queries(hidden, ids, start=len(prompt))

        text = self.tokenizer.decode(answer)
        return Generation(text=text, answer_ids=answer, explanation=parse_explanation(text),
                          seg_queries=queries, truncated=not finished)
