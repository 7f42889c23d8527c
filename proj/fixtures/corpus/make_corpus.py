"""Regenerates the fixture corpora and their PNG assets (needs Pillow)."""
import hashlib
import json
from pathlib import Path

from PIL import Image
from PIL.PngImagePlugin import PngInfo

HERE = Path(__file__).resolve().parent
ASSETS = HERE / "assets"


def image(name, text, width=512, height=512):
    digest = hashlib.sha256(text.encode()).digest()
    img = Image.new("RGB", (width, height), tuple(digest[:3]))
    block = Image.new("RGB", (width // 2, height // 2), tuple(digest[3:6]))
    img.paste(block, (width // 4, height // 4))
    info = PngInfo()
    info.add_text("prompt", text)
    img.save(ASSETS / name, pnginfo=info)
    return f"assets/{name}"


def example(eid, title, category, steps, sizes=None):
    out = []
    for k, text in enumerate(steps, 1):
        w, h = (sizes or {}).get(k, (512, 512))
        out.append({"text": text, "image": image(f"{eid}-{k}.png", text, w, h)})
    return {"id": eid, "title": title, "category": category, "topic": category, "steps": out}


WIKI = [
    example("brew-tea", "How to Brew Loose Leaf Tea", "food", [
        "Heat fresh water until it is just below boiling.",
        "Put one spoon of tea leaves into an infuser in your cup.",
        "Pour the water over the leaves and steep for three minutes.",
    ]),
    example("repot-plant", "How to Repot a Houseplant", "home", [
        "Choose a new pot slightly larger than the current one.",
        "Water the plant a day before repotting.",
        "Tip the pot and slide the plant out while holding the stem base.",
        "Loosen the roots and place the plant on fresh soil in the new pot.",
        "Fill around the roots with soil and water thoroughly.",
    ]),
    example("clean-cast-iron", "How to Clean a Cast Iron Pan", "home", [
        "Let the pan cool until it is warm but safe to touch.",
        "Rinse the pan with hot water.",
        "Scrub off stuck food with coarse salt and a sponge.",
        "Rinse away the salt and loosened food.",
        "Dry the pan completely with a towel.",
        "Heat the pan on the stove to drive off remaining moisture.",
        "Rub a thin layer of oil over the cooking surface.",
    ]),
]

RECIPE = [
    example("pancakes", "Fluffy Pancakes", "recipe", [
        "Whisk flour, sugar, baking powder and salt in a bowl.",
        "Beat milk, egg and melted butter in a second bowl.",
        "Stir the wet ingredients into the dry ones until just combined.",
        "Pour a ladle of batter onto a hot greased pan and cook until bubbles form, then flip.",
    ]),
    example("tomato-soup", "Roasted Tomato Soup", "recipe", [
        "Halve the tomatoes and spread them on a baking tray with garlic.",
        "Drizzle with olive oil and roast until soft and browned.",
        "Saute a chopped onion in a pot until translucent.",
        "Add the roasted tomatoes and stock and simmer for ten minutes.",
        "Blend the soup until smooth.",
        "Season with salt and pepper and serve with basil.",
    ]),
    example("guacamole", "Simple Guacamole", "recipe", [
        "Cut the avocados in half and remove the pits.",
        "Scoop the flesh into a bowl and mash with a fork.",
        "Mix in lime juice, diced onion and chopped cilantro.",
        "Season with salt and serve with tortilla chips.",
    ]),
    example("omelette", "Cheese Omelette", "recipe", [
        "Crack three eggs into a bowl and beat them with a pinch of salt.",
        "Melt butter in a nonstick pan over medium heat.",
        "Pour in the eggs and stir gently until they begin to set.",
        "Sprinkle grated cheese over one half of the omelette.",
        "Fold the omelette over the cheese and slide it onto a plate.",
    ]),
]

shared = image("shared.png", "A generic kitchen counter.")
INVALID = [
    example("ok-task", "How to Water a Cactus", "home", [
        "Check that the soil is completely dry.",
        "Water slowly at the base until it drains from the bottom.",
        "Empty the saucer after a few minutes.",
    ]),
    example("short-task", "How to Open a Door", "home", [
        "Turn the handle.",
        "Push the door.",
    ]),
    {"id": "long-task", "title": "How to Do Twenty Three Things", "category": "home", "topic": "home",
     "steps": [{"text": f"Do thing number {k}.", "image": shared} for k in range(1, 24)]},
    example("small-image", "How to Fold a Towel", "home", [
        "Lay the towel flat on a table.",
        "Fold it in half lengthwise.",
        "Fold it in thirds widthwise.",
        "Stack it on the shelf.",
    ], sizes={2: (399, 500)}),
    {"id": "missing-image", "title": "How to Sharpen a Pencil", "category": "home", "topic": "home",
     "steps": [
         {"text": "Insert the pencil into the sharpener.", "image": shared},
         {"text": "Turn the pencil clockwise.", "image": "assets/does-not-exist.png"},
         {"text": "Blow away the shavings.", "image": shared},
     ]},
]

for name, data in [("wikiplan", WIKI), ("recipeplan", RECIPE), ("invalid", INVALID)]:
    (HERE / f"{name}.json").write_text(json.dumps(data, indent=2) + "\n")
