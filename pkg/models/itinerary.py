"""Itineraries: elements of the sequence space Sigma."""

from dataclasses import dataclass
from typing import List, Tuple

from models.errors import InadmissibleWord

INFINITY_SYMBOL = "∞"


@dataclass(frozen=True)
class Itinerary:
    """A finite word (prepole), an eventually periodic word, or the symbol infinity.

    Serialized as comma-separated integers with '|' separating the preperiod
    from the period: "1,2" is a prepole word, "|0" the fixed point word 0-bar,
    "1|0" the preperiodic word 1 0 0 0 ...
    """
    preperiod: Tuple[int, ...] = ()
    period: Tuple[int, ...] = ()
    is_infinity_terminal: bool = False

    def __post_init__(self):
        if self.is_infinity_terminal and (self.preperiod or self.period):
            raise InadmissibleWord("the infinity symbol carries no digits")
        if not self.is_infinity_terminal and not self.preperiod and not self.period:
            raise InadmissibleWord("empty itinerary")

    @classmethod
    def infinity(cls) -> "Itinerary":
        return cls(is_infinity_terminal=True)

    @classmethod
    def finite(cls, *symbols: int) -> "Itinerary":
        return cls(preperiod=tuple(int(j) for j in symbols))

    @classmethod
    def periodic(cls, *symbols: int) -> "Itinerary":
        return cls(period=tuple(int(j) for j in symbols))

    @classmethod
    def parse(cls, text: str) -> "Itinerary":
        raw = text.strip().replace(" ", "")
        if raw in (INFINITY_SYMBOL, "inf", "infinity"):
            return cls.infinity()
        if raw.count("|") > 1:
            raise InadmissibleWord(f"more than one '|' in {text!r}")
        head, sep, tail = raw.partition("|")
        preperiod = _parse_digits(head, text, allow_empty=bool(sep))
        period = _parse_digits(tail, text, allow_empty=False) if sep else ()
        return cls(preperiod=preperiod, period=period)

    def format(self) -> str:
        if self.is_infinity_terminal:
            return INFINITY_SYMBOL
        head = ",".join(str(j) for j in self.preperiod)
        if not self.period:
            return head
        return f"{head}|{','.join(str(j) for j in self.period)}"

    def __str__(self) -> str:
        return self.format()

    @property
    def is_finite(self) -> bool:
        return not self.is_infinity_terminal and not self.period

    @property
    def is_periodic(self) -> bool:
        return bool(self.period) and not self.preperiod

    @property
    def is_preperiodic(self) -> bool:
        return bool(self.period) and bool(self.preperiod)

    @property
    def order(self) -> int:
        """Prepole order n (length of a finite word)."""
        return len(self.preperiod) if self.is_finite else 0

    def shift(self) -> "Itinerary":
        """sigma: drop the leading symbol."""
        if self.is_infinity_terminal:
            return self
        if self.is_finite:
            if len(self.preperiod) == 1:
                return Itinerary.infinity()
            return Itinerary(preperiod=self.preperiod[1:])
        if self.preperiod:
            return Itinerary(preperiod=self.preperiod[1:], period=self.period)
        return Itinerary(period=self.period[1:] + self.period[:1])

    def symbols(self, count: int) -> List[int]:
        """The first `count` symbols (fewer for a short finite word)."""
        out = list(self.preperiod[:count])
        if self.period:
            i = 0
            while len(out) < count:
                out.append(self.period[i % len(self.period)])
                i += 1
        return out


def _parse_digits(chunk: str, text: str, allow_empty: bool) -> Tuple[int, ...]:
    if chunk == "":
        if allow_empty:
            return ()
        raise InadmissibleWord(f"empty word segment in {text!r}")
    out = []
    for token in chunk.split(","):
        if token == "":
            raise InadmissibleWord(f"empty symbol in {text!r}")
        try:
            out.append(int(token))
        except ValueError as e:
            raise InadmissibleWord(f"non-integer symbol {token!r} in {text!r}") from e
    return tuple(out)
