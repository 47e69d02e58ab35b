from dataclasses import dataclass, field
from typing import Dict, List, Optional, Any


@dataclass
class ExpressionScore:
    """Scores of one expression"""
    sample_id: str
    expression_id: str
    form: str
    J: float
    F: float
    JF: float
    meteor: Optional[float] = None
    no_target: bool = False
    missing: bool = False
    tags: List[str] = field(default_factory=list)


@dataclass
class SplitScore:
    """Mean scores over the expressions of one form (or one tagged subset)"""
    name: str
    J: float
    F: float
    JF: float
    count: int
    meteor: Optional[float] = None


@dataclass
class EvalReport:
    """Per-expression, per-split and overall scores of one prediction run"""
    expressions: List[ExpressionScore]
    splits: Dict[str, SplitScore]
    overall: SplitScore
    subsets: Dict[str, SplitScore] = field(default_factory=dict)
    missing: int = 0
    run_info: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        def split_dict(s: SplitScore) -> Dict[str, Any]:
            return {"name": s.name, "J": s.J, "F": s.F, "JF": s.JF, "count": s.count, "meteor": s.meteor}

        return {
            "overall": split_dict(self.overall),
            "splits": {k: split_dict(v) for k, v in self.splits.items()},
            "subsets": {k: split_dict(v) for k, v in self.subsets.items()},
            "missing": self.missing,
            "run_info": self.run_info,
            "expressions": [vars(e) for e in self.expressions],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EvalReport":
        return cls(
            expressions=[ExpressionScore(**e) for e in data.get("expressions", [])],
            splits={k: SplitScore(**v) for k, v in data.get("splits", {}).items()},
            overall=SplitScore(**data["overall"]),
            subsets={k: SplitScore(**v) for k, v in data.get("subsets", {}).items()},
            missing=int(data.get("missing", 0)),
            run_info=dict(data.get("run_info", {})),
        )
