"""Named object primitives.

The two training primitives are the shapes the networks learn from. The
unseen set mimics household items within the simulator's
cylinder/cuboid vocabulary, with dimensions distinct from training.
"""

from .tactile_sim import ObjectPrimitive

OBJECTS = {
    o.name: o
    for o in [
        ObjectPrimitive("cylinder", (0.0225, 0.15), 0.08, 0.15, 0.6, "cylinder"),
        ObjectPrimitive("cuboid", (0.05, 0.05, 0.19), 0.12, 0.25, 0.5, "cuboid"),
        ObjectPrimitive("cylinder", (0.037, 0.23), 0.20, 0.15, 0.5, "pringles"),
        ObjectPrimitive("cylinder", (0.016, 0.11), 0.05, 0.2, 0.45, "glue_bottle"),
        ObjectPrimitive("cuboid", (0.06, 0.06, 0.14), 0.15, 0.25, 0.45, "tabasco"),
        ObjectPrimitive("cuboid", (0.045, 0.035, 0.16), 0.10, 0.2, 0.5, "mallow_pop"),
        ObjectPrimitive("cuboid", (0.055, 0.04, 0.2), 0.12, 0.2, 0.5, "cheez_it"),
        ObjectPrimitive("cuboid", (0.05, 0.03, 0.18), 0.25, 0.3, 0.45, "shampoo"),
        ObjectPrimitive("cuboid", (0.02, 0.02, 0.08), 0.03, 0.3, 0.5, "lipstick"),
    ]
}

TRAINING_OBJECTS = ("cylinder", "cuboid")
UNSEEN_OBJECTS = ("pringles", "glue_bottle", "tabasco", "mallow_pop", "cheez_it", "shampoo", "lipstick")


def parse_object(text):
    """Catalog name, or an inline spec ``shape:d1,d2[,d3]:mass[:stiffness[:com_fraction]][@name]``."""
    text = text.strip()
    if text in OBJECTS:
        return OBJECTS[text]
    name = ""
    if "@" in text:
        text, name = text.split("@", 1)
    parts = text.split(":")
    if len(parts) < 3:
        raise ValueError(f"unknown object {text!r}; use a catalog name ({', '.join(OBJECTS)}) "
                         "or shape:dims:mass[:stiffness[:com_fraction]]")
    dims = tuple(float(d) for d in parts[1].split(","))
    extra = [float(p) for p in parts[3:]]
    return ObjectPrimitive(parts[0], dims, float(parts[2]), *extra, name=name or parts[0])
