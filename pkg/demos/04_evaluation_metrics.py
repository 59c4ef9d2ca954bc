"""Answer normalization and the evaluation metrics: yes/no and counting
VQA accuracy plus success detection, all against a scripted model."""

from dialog_forge import (
    Episode,
    ScriptedEndpoint,
    VqaItem,
    gen_world,
    normalize_count,
    normalize_yes_no,
    score_vqa,
    success_detection_eval,
)
from dialog_forge.evaluation import format_percent, render_table

print("normalization:")
for text in ("Yes.", "There is no cat", "no, it's shut", "maybe"):
    print(f"  yes_no({text!r}) = {normalize_yes_no(text)}")
for text in ("one", "none", "I see 12 apples", "several"):
    print(f"  count({text!r}) = {normalize_count(text)}")

world = gen_world(seed=3, n_images=8, distinct=True)
image_id = world.records[0].image_id

items = [
    VqaItem(image_id, "Is there a cat?", ("yes",), "yes_no"),
    VqaItem(image_id, "Is there a dog?", ("no",), "yes_no"),
    VqaItem(image_id, "How many mugs?", ("3", "three"), "counting"),
    VqaItem(image_id, "How many cars?", ("0", "none"), "counting"),
]
model = ScriptedEndpoint(["Yes.", "maybe", "three", "two"])
report = score_vqa(items, model, world)
print()
print(
    render_table(
        "VQA accuracy",
        ["type", "accuracy"],
        [[t, format_percent(s["accuracy"])] for t, s in report.per_type.items()],
    )
)

episodes = [
    Episode(image_id, "open the drawer", "Is the drawer open?", "yes"),
    Episode(image_id, "open the drawer", "Is the drawer open?", "no"),
]
sd = success_detection_eval(episodes, ScriptedEndpoint(["yes", "yes"]), world)
stats = sd.per_type["success_detection"]
print(
    f"\nsuccess detection: {format_percent(stats['accuracy'])} "
    f"(confusion {sd.confusion})"
)
