import enum


class DefectClass(enum.IntEnum):
    """
    The four seeded defect classes. The integer value is the class label used by the
    classifier and the index of the class's 30-inch zone along the slab.
    """
    SHALLOW_DELAM = 0
    HONEYCOMB = 1
    VOID = 2
    DEEP_DELAM = 3

    @property
    def display_name(self) -> str:
        return DISPLAY_NAMES[self]

    @property
    def short_name(self) -> str:
        return f"D{self.value + 1}"

    @classmethod
    def parse(cls, name: "str | int | DefectClass") -> "DefectClass":
        """
        Parses a class from its label, enum name (any case) or display name.
        """
        if isinstance(name, (int, DefectClass)):
            return cls(int(name))
        key = name.strip()
        if key.isdigit():
            return cls(int(key))
        for member in cls:
            if key.upper() == member.name or key == member.display_name or key == member.short_name:
                return member
        raise ValueError(f"Unknown defect class: {name}")


DISPLAY_NAMES = {DefectClass.SHALLOW_DELAM: "Shallow Delamination",
                 DefectClass.HONEYCOMB: "Honeycombing",
                 DefectClass.VOID: "Void",
                 DefectClass.DEEP_DELAM: "Deep Delamination"}

# Zone order along the longitudinal axis of a lab slab.
ZONE_ORDER = [DefectClass.SHALLOW_DELAM, DefectClass.HONEYCOMB, DefectClass.VOID, DefectClass.DEEP_DELAM]

# Marker colours for prediction maps (matplotlib tab10 entries).
CLASS_COLORS = {DefectClass.SHALLOW_DELAM: "#1f77b4",
                DefectClass.HONEYCOMB: "#ff7f0e",
                DefectClass.VOID: "#2ca02c",
                DefectClass.DEEP_DELAM: "#d62728"}

NUM_CLASSES = len(DefectClass)
