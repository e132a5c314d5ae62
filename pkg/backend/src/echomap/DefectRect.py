from dataclasses import dataclass

from echomap.DefectClass import DefectClass
from echomap.EchoMapException import InvalidSpecException


@dataclass(frozen=True)
class DefectRect:
    """
    A rectangular seeded defect, parameterized by its top-left coordinate and its
    width and height, all in inches. The rectangle covers the half-open region
    ``[x_in, x_in + w_in) x [y_in, y_in + h_in)``.
    """
    x_in: float
    y_in: float
    w_in: float
    h_in: float
    defect_class: DefectClass

    def __post_init__(self):
        if self.w_in <= 0 or self.h_in <= 0:
            raise InvalidSpecException(f"Defect rectangle must have positive size, got {self.w_in} x {self.h_in}")
        object.__setattr__(self, "defect_class", DefectClass.parse(self.defect_class))

    @property
    def x_hi_in(self) -> float:
        return self.x_in + self.w_in

    @property
    def y_hi_in(self) -> float:
        return self.y_in + self.h_in

    @property
    def centroid(self) -> tuple[float, float]:
        return self.x_in + self.w_in / 2, self.y_in + self.h_in / 2

    @property
    def area(self) -> float:
        return self.w_in * self.h_in

    def contains(self, x_in: float, y_in: float) -> bool:
        return self.x_in <= x_in < self.x_hi_in and self.y_in <= y_in < self.y_hi_in

    def inside(self, width_in: float, height_in: float) -> bool:
        """
        Whether the rectangle lies entirely inside a ``width_in`` x ``height_in`` slab.
        """
        return self.x_in >= 0 and self.y_in >= 0 and self.x_hi_in <= width_in and self.y_hi_in <= height_in

    def overlaps(self, other: "DefectRect") -> bool:
        return (self.x_in < other.x_hi_in and other.x_in < self.x_hi_in
                and self.y_in < other.y_hi_in and other.y_in < self.y_hi_in)

    def to_dict(self) -> dict:
        return {"x_in": self.x_in, "y_in": self.y_in, "w_in": self.w_in, "h_in": self.h_in,
                "class": self.defect_class.name}

    @classmethod
    def from_dict(cls, d: dict) -> "DefectRect":
        return cls(float(d["x_in"]), float(d["y_in"]), float(d["w_in"]), float(d["h_in"]),
                   DefectClass.parse(d["class"]))
