"""Template-based natural-language explanations.

Attribution output becomes a typed explanation graph (entities, their
nutrients, consequences, user risk attributes); a violation plus a user
model then drives a decision-tree template walk that renders a
three-part message: feedback (what was violated), argument (why it
matters, varied against the message history) and suggestion (an
admissible alternative behavior filtered by diet profile, persuasion
goals and recent history).

Knowledge tables and template trees are line-oriented text (see
``DEFAULT_KNOWLEDGE_TEXT`` / ``DEFAULT_TEMPLATES_TEXT`` for the grammar
by example). Rendering is deterministic given (graph, violation, user,
history); history timestamps are a logical counter so replays are
byte-identical.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .tensor import ValidationError

HISTORY_HORIZON = 3
TOP_K_FEATURES = 3

NODE_KINDS = ("entity", "food", "nutrient", "consequence",
              "user-attribute", "class")

VERB_FORMS = {
    "drink": ("drank", "drinking"),
    "eat": ("ate", "eating"),
    "consume": ("consumed", "consuming"),
    "intake": ("intaked", "intaking"),
}

KIND_VERBS = {"beverage": "drink", "solid": "eat"}
VARIETY_POOL = ("consume", "eat", "intake", "drink")


@dataclass
class Node:
    node_id: str
    kind: str
    label: str

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise ValidationError(f"unknown node kind {self.kind!r}")


@dataclass
class Arc:
    source: str
    target: str
    relation: str


@dataclass
class ExplanationGraph:
    nodes: list = field(default_factory=list)
    arcs: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)  # node id -> source
    warnings: list = field(default_factory=list)

    def node_ids(self):
        return {n.node_id for n in self.nodes}

    def labels(self, kind=None):
        return [n.label for n in self.nodes
                if kind is None or n.kind == kind]

    def has_label(self, label):
        return any(n.label == label for n in self.nodes)

    def add_node(self, node_id, kind, label, provenance=None):
        if node_id not in self.node_ids():
            self.nodes.append(Node(node_id, kind, label))
            if provenance:
                self.provenance[node_id] = provenance

    def add_arc(self, source, target, relation):
        ids = self.node_ids()
        if source not in ids or target not in ids:
            raise ValidationError(
                f"arc {source} -> {target} references a missing node"
            )
        self.arcs.append(Arc(source, target, relation))

    def validate_acyclic(self):
        """The violation -> consequence direction must not cycle."""
        adj = {}
        for arc in self.arcs:
            adj.setdefault(arc.source, []).append(arc.target)
        state = {}

        def visit(node):
            if state.get(node) == 1:
                raise ValidationError(f"cycle through node {node}")
            if state.get(node) == 2:
                return
            state[node] = 1
            for nxt in adj.get(node, ()):
                visit(nxt)
            state[node] = 2

        for node in list(adj):
            visit(node)

    def to_record(self):
        return {
            "schema": 1,
            "kind": "explanation-graph",
            "nodes": [{"id": n.node_id, "kind": n.kind, "label": n.label}
                      for n in self.nodes],
            "arcs": [{"source": a.source, "target": a.target,
                      "relation": a.relation} for a in self.arcs],
            "provenance": self.provenance,
            "warnings": self.warnings,
        }


@dataclass
class Violation:
    entity: str
    observed: float | None
    allowed: float | None
    intention: str              # encourage | discourage
    meal: str | None = None     # breakfast | lunch | dinner | snack
    period: str = "ongoing-week"  # moment | ongoing-week

    def __post_init__(self):
        if self.intention not in ("encourage", "discourage"):
            raise ValidationError(
                f"intention must be encourage/discourage, got "
                f"{self.intention!r}"
            )
        if self.period not in ("moment", "ongoing-week"):
            raise ValidationError(
                f"period must be moment/ongoing-week, got {self.period!r}"
            )
        if self.quantified:
            if self.intention == "discourage" and not \
                    self.observed > self.allowed:
                raise ValidationError(
                    "a discouraging violation needs observed > allowed"
                )
            if self.intention == "encourage" and not \
                    self.observed < self.allowed:
                raise ValidationError(
                    "an encouraging violation needs observed < allowed"
                )

    @property
    def quantified(self):
        return self.observed is not None and self.allowed is not None


@dataclass
class UserModel:
    age: int = 40
    vegetarian: bool = False
    persuasion_goals: dict = field(default_factory=dict)  # entity -> goal
    barriers: tuple = ()


@dataclass
class HistoryEntry:
    timestamp: int
    entity: str
    alternative: str | None
    facet_index: int
    text: str


class MessageHistory:
    """Append-only rendered-message log with logical timestamps."""

    def __init__(self):
        self._entries = []

    def __len__(self):
        return len(self._entries)

    @property
    def entries(self):
        return tuple(self._entries)

    def record(self, entity, alternative, facet_index, text):
        entry = HistoryEntry(timestamp=len(self._entries), entity=entity,
                             alternative=alternative,
                             facet_index=facet_index, text=text)
        self._entries.append(entry)
        return entry

    def recent(self, n):
        return self._entries[-n:] if n > 0 else []

    def last(self):
        return self._entries[-1] if self._entries else None


# ---------------------------------------------------------------------------
# domain knowledge


@dataclass
class Facet:
    nutrients: tuple
    consequence: str
    mode: str = "cause"         # cause | help


@dataclass
class EntityInfo:
    label: str
    kind: str                   # solid | beverage
    category: str               # meat | fish | dairy | plant | drink
    plural: bool = False
    risk_age: int | None = None
    facets: tuple = ()
    alternatives: tuple = ()
    feature: str | None = None  # attribution feature this entity explains


DEFAULT_KNOWLEDGE_TEXT = """\
# entity: <label> | kind=<solid|beverage> category=<word> plural=<yes|no>
#         [risk_age=<years>] [feature=<attribution feature name>]
#   facet: <nutrient>[, <nutrient>...] -> <consequence> [| help]
#   alternatives: <label>[, <label>...]
entity: cold cuts | kind=solid category=meat plural=yes risk_age=60 feature=cold_cuts_portions
  facet: animal fats, salt -> cardiovascular diseases
  facet: sodium -> hypertension
  alternatives: fresh fish, legumes, white meat
entity: fresh fish | kind=solid category=fish plural=no feature=fish_portions
  facet: omega-3 fats -> heart protection | help
  alternatives: legumes
entity: legumes | kind=solid category=plant plural=yes feature=legume_portions
  facet: vegetable proteins, fiber -> healthy digestion | help
  alternatives: vegetables
entity: white meat | kind=solid category=meat plural=no feature=white_meat_portions
  facet: lean proteins -> muscle maintenance | help
  alternatives: legumes, fresh fish
entity: meat | kind=solid category=meat plural=no feature=meat_portions
  facet: animal proteins, saturated fats -> high cholesterol
  alternatives: fresh fish, cheese, legumes
entity: cheese | kind=solid category=dairy plural=no feature=cheese_portions
  facet: calcium -> bone strength | help
  facet: saturated fats, salt -> high cholesterol
  alternatives: legumes
entity: fruit juice | kind=beverage category=drink plural=no feature=juice_ml
  facet: sugar -> weight gain and diabetes
  alternatives: water, herbal tea
entity: water | kind=beverage category=drink plural=no feature=water_ml
  facet: minerals -> hydration | help
  alternatives: herbal tea
entity: herbal tea | kind=beverage category=drink plural=no feature=tea_ml
  facet: antioxidants -> hydration | help
  alternatives: water
entity: vegetables | kind=solid category=plant plural=yes risk_age=0 feature=vegetable_portions
  facet: vitamins, fiber -> healthy digestion | help
  alternatives: legumes
"""

DIET_EXCLUSIONS = {"vegetarian": {"meat", "fish"}}

_ENTITY_RE = re.compile(r"entity:\s*(?P<label>[^|]+?)\s*\|\s*(?P<opts>.+)$")


def _parse_options(text, line_no, path):
    opts = {}
    for chunk in text.split():
        if "=" not in chunk:
            raise ValidationError(
                f"{path}:{line_no}: expected key=value, got {chunk!r}"
            )
        key, _, value = chunk.partition("=")
        opts[key] = value
    return opts


def parse_knowledge(text, path="<knowledge>") -> dict:
    """Parse a knowledge table; returns {entity label: EntityInfo}."""
    table = {}
    current = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("entity:"):
            m = _ENTITY_RE.match(line)
            if not m:
                raise ValidationError(
                    f"{path}:{line_no}: malformed entity line"
                )
            opts = _parse_options(m.group("opts"), line_no, path)
            for key in ("kind", "category"):
                if key not in opts:
                    raise ValidationError(
                        f"{path}:{line_no}: entity needs {key}="
                    )
            label = m.group("label")
            current = EntityInfo(
                label=label,
                kind=opts["kind"],
                category=opts["category"],
                plural=opts.get("plural", "no") == "yes",
                risk_age=int(opts["risk_age"]) if "risk_age" in opts
                else None,
                feature=opts.get("feature"),
            )
            table[label] = current
        elif line.startswith("facet:"):
            if current is None:
                raise ValidationError(
                    f"{path}:{line_no}: facet before any entity"
                )
            body = line[len("facet:"):].strip()
            mode = "cause"
            if "|" in body:
                body, _, mode = body.partition("|")
                mode = mode.strip()
                if mode not in ("cause", "help"):
                    raise ValidationError(
                        f"{path}:{line_no}: facet mode must be cause or "
                        f"help, got {mode!r}"
                    )
            if "->" not in body:
                raise ValidationError(
                    f"{path}:{line_no}: facet needs 'nutrients -> "
                    "consequence'"
                )
            nutrients, _, consequence = body.partition("->")
            current.facets = current.facets + (Facet(
                nutrients=tuple(n.strip() for n in nutrients.split(",")),
                consequence=consequence.strip(), mode=mode,
            ),)
        elif line.startswith("alternatives:"):
            if current is None:
                raise ValidationError(
                    f"{path}:{line_no}: alternatives before any entity"
                )
            current.alternatives = tuple(
                a.strip() for a in line[len("alternatives:"):].split(",")
            )
        else:
            raise ValidationError(
                f"{path}:{line_no}: unrecognized line {line!r}"
            )
    return table


def default_knowledge() -> dict:
    return parse_knowledge(DEFAULT_KNOWLEDGE_TEXT)


def load_knowledge(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_knowledge(fh.read(), path=path)


# ---------------------------------------------------------------------------
# template trees


@dataclass
class TemplateLeaf:
    text: str
    options: dict = field(default_factory=dict)


@dataclass
class TemplateNode:
    condition: str
    children: list = field(default_factory=list)
    leaf: TemplateLeaf | None = None


def _match_condition(condition, violation: Violation, user: UserModel):
    if condition.strip() == "*":
        return True
    for clause in condition.split():
        key, _, value = clause.partition("=")
        if key == "intention":
            if violation.intention != value:
                return False
        elif key == "period":
            if violation.period != value:
                return False
        elif key == "meal":
            have = violation.meal if violation.meal is not None else "none"
            if have != value:
                return False
        elif key == "quantified":
            if ("yes" if violation.quantified else "no") != value:
                return False
        elif key == "vegetarian":
            if ("yes" if user.vegetarian else "no") != value:
                return False
        elif key.startswith("age>"):
            # written as age>=N in tree files
            threshold = int(key.split("=", 1)[1] if "=" in key else value)
            if not user.age >= threshold:
                return False
        else:
            raise ValidationError(f"unknown condition key {key!r}")
    return True


def select_template(tree: TemplateNode, violation: Violation,
                    user: UserModel) -> TemplateLeaf:
    """Deterministic descent: at each node the first matching child wins;
    reaching a node with no matching child is a configuration error."""
    node = tree
    path = []
    while node.leaf is None:
        path.append(node.condition)
        chosen = None
        for child in node.children:
            if _match_condition(child.condition, violation, user):
                chosen = child
                break
        if chosen is None:
            raise ValidationError(
                "no template leaf reachable; conditions not total under "
                f"{' / '.join(path)}"
            )
        node = chosen
    return node.leaf


DEFAULT_TEMPLATES_TEXT = """\
# tree <facet>
# when <cond> [<cond>...]: "<template>" [| key=value ...]
# nested 'when' lines indent by two spaces; '*' always matches
tree feedback
when period=moment: "You {VERB} a lot of {ENTITY} for {MEAL}." | verb=kind tense=past
when period=ongoing-week quantified=yes intention=discourage: "This week you {VERB} too much ({QTY} portions of a maximum {MAX}) {ENTITY}." | verb=variety tense=past
when period=ongoing-week quantified=yes intention=encourage: "This week you {VERB} too little ({QTY} portions of a minimum {MAX}) {ENTITY}." | verb=variety tense=past
when *: "You are {VERB} a lot of {ENTITY} this week." | verb=kind tense=continuous

tree argument
when intention=discourage: "{ENTITY} {VERB} {NUTRIENT} that can cause {CONSEQUENCE}." | verb=contain
when intention=encourage: "{ENTITY} {VERB} in {NUTRIENT} that help {CONSEQUENCE}." | verb=rich

tree risk
when *: "People over {RISK_AGE} years old are particularly at risk."

tree suggestion
when intention=discourage: "Next time try with some {ALTERNATIVE}" | punct=none
when *: "Keep going and try also some {ALTERNATIVE}" | punct=none
"""

_WHEN_RE = re.compile(
    r'^(?P<indent>\s*)when\s+(?P<cond>[^:]+?)\s*'
    r'(?::\s*"(?P<text>.*)"\s*(?:\|\s*(?P<opts>.+))?)?$'
)


def parse_templates(text, path="<templates>") -> dict:
    """Parse template trees; returns {facet name: TemplateNode root}."""
    trees = {}
    stack = None
    current = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.strip().startswith("#"):
            continue
        if raw.startswith("tree "):
            current = TemplateNode(condition="*")
            trees[raw[len("tree "):].strip()] = current
            stack = [(-1, current)]
            continue
        m = _WHEN_RE.match(raw)
        if not m or current is None:
            raise ValidationError(
                f"{path}:{line_no}: expected 'tree <name>' or a 'when' "
                f"line, got {raw.strip()!r}"
            )
        indent = len(m.group("indent"))
        node = TemplateNode(condition=m.group("cond").strip())
        if m.group("text") is not None:
            options = {}
            if m.group("opts"):
                options = _parse_options(m.group("opts"), line_no, path)
            node.leaf = TemplateLeaf(text=m.group("text"), options=options)
        while stack and stack[-1][0] >= indent:
            stack.pop()
        if not stack:
            raise ValidationError(f"{path}:{line_no}: bad indentation")
        stack[-1][1].children.append(node)
        stack.append((indent, node))
    return trees


def default_templates() -> dict:
    return parse_templates(DEFAULT_TEMPLATES_TEXT)


def load_templates(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_templates(fh.read(), path=path)


# ---------------------------------------------------------------------------
# realization


def conjugate(verb, tense):
    if verb not in VERB_FORMS:
        raise ValidationError(f"no conjugation table for verb {verb!r}")
    past, gerund = VERB_FORMS[verb]
    if tense == "past":
        return past
    if tense == "continuous":
        return gerund
    raise ValidationError(f"unknown tense {tense!r}")


def realize(leaf: TemplateLeaf, slots: dict) -> str:
    """Fill the leaf's nonterminals, capitalize the sentence start and
    guarantee terminal punctuation (unless the leaf opts out)."""
    text = leaf.text
    for match in re.finditer(r"\{([A-Z_]+)\}", leaf.text):
        name = match.group(1)
        if name not in slots or slots[name] is None:
            raise ValidationError(f"missing template slot {name!r}")
        text = text.replace("{%s}" % name, str(slots[name]))
    text = text[:1].upper() + text[1:]
    if leaf.options.get("punct") != "none" and text and \
            text[-1] not in ".!?":
        text += "."
    return text


def _select_verb(leaf, info: EntityInfo, history: MessageHistory):
    policy = leaf.options.get("verb", "kind")
    if policy == "kind":
        return KIND_VERBS.get(info.kind, "consume")
    if policy == "variety":
        pool = [v for v in VARIETY_POOL
                if v != "drink" or info.kind == "beverage"]
        if info.kind != "beverage" and "eat" not in pool:
            pool.append("eat")
        return pool[len(history) % len(pool)]
    if policy == "contain":
        return "contain" if info.plural else "contains"
    if policy == "rich":
        return "are rich" if info.plural else "is rich"
    raise ValidationError(f"unknown verb policy {policy!r}")


def _tense_for(leaf, violation):
    tense = leaf.options.get("tense", "auto")
    if tense != "auto":
        return tense
    return "past" if violation.period == "moment" else "continuous"


def _quantity(value):
    return str(int(value)) if float(value).is_integer() else str(value)


def graph_from_attribution(attr, knowledge: dict, user: UserModel,
                           top_k: int = TOP_K_FEATURES,
                           class_label: str = "lifestyle class"
                           ) -> ExplanationGraph:
    """Entity nodes for the strongest attribution features, enriched with
    nutrients, consequences and user risk attributes from the knowledge
    table. Unresolvable features are skipped and listed in warnings."""
    graph = ExplanationGraph()
    graph.add_node("class", "class", class_label)
    by_feature = {info.feature: info for info in knowledge.values()
                  if info.feature}
    phi = list(attr.phi)
    names = attr.feature_names or [f"feature_{i}" for i in range(len(phi))]
    order = sorted(range(len(phi)), key=lambda i: (-abs(phi[i]), i))
    for i in order[:top_k]:
        info = by_feature.get(names[i]) or knowledge.get(names[i])
        if info is None:
            graph.warnings.append(
                f"feature {names[i]!r} is not in the knowledge table"
            )
            continue
        entity_id = f"entity:{info.label}"
        graph.add_node(entity_id, "food", info.label, provenance=names[i])
        intention = "discourage" if phi[i] > 0 else "encourage"
        graph.add_arc(entity_id, "class", f"influences ({intention})")
        if info.facets:
            facet = info.facets[0]
            for nutrient in facet.nutrients:
                nid = f"nutrient:{nutrient}"
                graph.add_node(nid, "nutrient", nutrient,
                               provenance=names[i])
                graph.add_arc(entity_id, nid, "contains")
                cid = f"consequence:{facet.consequence}"
                graph.add_node(cid, "consequence", facet.consequence,
                               provenance=names[i])
                relation = "can cause" if facet.mode == "cause" else "helps"
                graph.add_arc(nid, cid, relation)
        if info.risk_age is not None and user.age >= info.risk_age > 0:
            rid = f"user:over-{info.risk_age} risk"
            graph.add_node(rid, "user-attribute",
                           f"over-{info.risk_age} risk")
            graph.add_arc(rid, f"consequence:{info.facets[0].consequence}"
                          if info.facets else "class", "at risk")
    graph.validate_acyclic()
    return graph


def _admissible_alternatives(info: EntityInfo, knowledge, user: UserModel,
                             history: MessageHistory):
    excluded_categories = set()
    if user.vegetarian:
        excluded_categories |= DIET_EXCLUSIONS["vegetarian"]
    recent = {e.alternative for e in history.recent(HISTORY_HORIZON)}
    out = []
    for label in info.alternatives:
        alt = knowledge.get(label)
        if alt is not None and alt.category in excluded_categories:
            continue
        if user.persuasion_goals.get(label) == "reduce":
            continue
        if label in recent:
            continue
        out.append(label)
    return out


def _select_facet(info: EntityInfo, intention, history: MessageHistory):
    mode = "cause" if intention == "discourage" else "help"
    candidates = [i for i, f in enumerate(info.facets) if f.mode == mode]
    if not candidates:
        candidates = list(range(len(info.facets)))
    if not candidates:
        raise ValidationError(
            f"entity {info.label!r} has no argument facets"
        )
    last = history.last()
    if last is not None and last.entity == info.label and \
            len(candidates) > 1:
        candidates = [i for i in candidates if i != last.facet_index] \
            or candidates
    return candidates[0]


@dataclass
class Message:
    feedback: str
    argument: str
    suggestion: str | None
    text: str
    alternative: str | None
    facet_index: int
    suggestion_omitted: bool


def compose_explanation(graph: ExplanationGraph, violation: Violation,
                        user: UserModel, history: MessageHistory,
                        knowledge: dict | None = None,
                        templates: dict | None = None,
                        record: bool = True) -> Message:
    """Render the three-part message for a violation present in the
    explanation graph. With ``record`` the message is appended to the
    history so variability filters see it next time."""
    knowledge = knowledge if knowledge is not None else default_knowledge()
    templates = templates if templates is not None else default_templates()
    if violation.entity not in knowledge:
        raise ValidationError(
            f"entity {violation.entity!r} is not in the knowledge table"
        )
    if not graph.has_label(violation.entity):
        raise ValidationError(
            f"explanation graph does not contain the violation entity "
            f"{violation.entity!r}"
        )
    info = knowledge[violation.entity]
    facet_index = _select_facet(info, violation.intention, history)
    facet = info.facets[facet_index]
    slots = {
        "ENTITY": info.label,
        "QTY": _quantity(violation.observed)
        if violation.observed is not None else None,
        "MAX": _quantity(violation.allowed)
        if violation.allowed is not None else None,
        "MEAL": violation.meal,
        "NUTRIENT": " and ".join(facet.nutrients),
        "CONSEQUENCE": facet.consequence,
        "RISK_AGE": info.risk_age,
    }
    feedback_leaf = select_template(templates["feedback"], violation, user)
    slots["TENSE"] = _tense_for(feedback_leaf, violation)
    slots["VERB"] = conjugate(_select_verb(feedback_leaf, info, history),
                              slots["TENSE"])
    feedback = realize(feedback_leaf, slots)
    argument_leaf = select_template(templates["argument"], violation, user)
    slots["VERB"] = _select_verb(argument_leaf, info, history)
    argument = realize(argument_leaf, slots)
    if info.risk_age is not None and 0 < info.risk_age <= user.age:
        risk_leaf = select_template(templates["risk"], violation, user)
        argument = argument + " " + realize(risk_leaf, slots)
    alternatives = _admissible_alternatives(info, knowledge, user, history)
    suggestion = None
    alternative = None
    if alternatives:
        alternative = alternatives[0]
        slots["ALTERNATIVE"] = alternative
        suggestion_leaf = select_template(templates["suggestion"],
                                          violation, user)
        slots["VERB"] = "try"
        suggestion = realize(suggestion_leaf, slots)
    parts = [feedback, argument] + ([suggestion] if suggestion else [])
    text = " ".join(parts)
    if record:
        history.record(entity=info.label, alternative=alternative,
                       facet_index=facet_index, text=text)
    return Message(feedback=feedback, argument=argument,
                   suggestion=suggestion, text=text,
                   alternative=alternative, facet_index=facet_index,
                   suggestion_omitted=not alternatives)
