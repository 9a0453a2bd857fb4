"""Unit constants, element tables and QM9 target metadata."""

HARTREE_TO_EV = 27.211386245988
EV_TO_KCAL_PER_MOL = 23.060547830619

# energy per unit, expressed in eV
ENERGY_UNITS = {
    "Ha": HARTREE_TO_EV,
    "eV": 1.0,
    "meV": 1e-3,
    "kcal_per_mol": 1.0 / EV_TO_KCAL_PER_MOL,
}

SYMBOL_TO_Z = {"H": 1, "C": 6, "N": 7, "O": 8, "F": 9}
Z_TO_SYMBOL = {z: s for s, z in SYMBOL_TO_Z.items()}

ELEMENTS_BY_MODE = {
    "qm9": frozenset({1, 6, 7, 8, 9}),
    "md": frozenset({1, 6, 8}),
    "plain": frozenset({1, 6, 7, 8, 9}),
}

# Field order of the QM9 property line after the "gdb <index>" tag.
QM9_PROPERTY_FIELDS = (
    "A", "B", "C", "mu", "alpha", "homo", "lumo", "gap",
    "r2", "zpve", "u0", "u", "h", "g", "cv",
)
QM9_TARGETS = ("mu", "alpha", "homo", "lumo", "gap", "r2", "zpve", "u0", "u", "h", "g", "cv")

# target -> (native unit, reporting unit). Energy-like targets convert through
# ENERGY_UNITS; the rest are reported natively.
TARGET_UNITS = {
    "mu": ("D", "D"),
    "alpha": ("bohr3", "bohr3"),
    "homo": ("Ha", "eV"),
    "lumo": ("Ha", "eV"),
    "gap": ("Ha", "eV"),
    "r2": ("bohr2", "bohr2"),
    "zpve": ("Ha", "meV"),
    "u0": ("Ha", "eV"),
    "u": ("Ha", "eV"),
    "h": ("Ha", "eV"),
    "g": ("Ha", "eV"),
    "cv": ("cal_per_molK", "cal_per_molK"),
    "energy": ("kcal_per_mol", "kcal_per_mol"),
}
