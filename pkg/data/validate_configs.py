import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from causal.graph import (  # noqa: E402
    CausalGraph,
    GraphValidationError,
    PathwaySet,
    check_recanting_witness,
    expand_pathways,
    validate_graph,
    validate_pathways,
)
from estimation.ipw import UnsupportedGraphError, recipe_from_graph  # noqa: E402
from utils.config_utils import experiment_from_dict  # noqa: E402
from utils.data_utils import DataError, Schema  # noqa: E402

DATA_DIR = Path(__file__).parent


def load_json(path):
    with open(path, 'r') as file:
        return json.load(file)


def graph_and_pathways(config):
    graph = CausalGraph.from_roles(config['nodes'], config.get('edges', []))
    if 'pathways' in config:
        return graph, PathwaySet.of(config['pathways'])
    if 'unfair' in config:
        return graph, expand_pathways(graph, direct=config['unfair'].get('direct', True),
                                      through=config['unfair'].get('through', ()))
    return graph, None


def check_graph_structure(config):
    """Acyclic, one sensitive node, one outcome node"""
    graph, _ = graph_and_pathways(config)
    return validate_graph(graph)


def check_pathways(config):
    """Every unfair pathway runs A→…→Y along graph edges"""
    graph, pi = graph_and_pathways(config)
    if pi is None:
        return ["No unfair pathways ('pathways' or 'unfair')."]
    return validate_pathways(graph, pi)


def check_witness(config):
    """Recanting witness matches the config's expectation"""
    graph, pi = graph_and_pathways(config)
    witness = check_recanting_witness(graph, pi)
    expected = config.get('expect_witness')
    if witness != expected:
        return [f"Recanting witness is {witness!r}, config expects {expected!r}."]
    return []


def check_weight_recipe(config):
    """C / Mπ / Mπ̄ blocks exist for admissible graphs"""
    if config.get('expect_witness'):
        return []
    graph, pi = graph_and_pathways(config)
    try:
        recipe_from_graph(graph, pi)
    except UnsupportedGraphError as e:
        return [str(e)]
    return []


def check_schema(schema_path):
    """Schema parses and its roles name graph nodes of the matching graph"""
    try:
        schema = Schema.load(schema_path)
    except DataError as e:
        return [str(e)]
    graph_path = DATA_DIR / 'graphs' / schema_path.name
    if not graph_path.exists():
        return [f"No graph config named {schema_path.name}."]
    graph, _ = graph_and_pathways(load_json(graph_path))
    observed = set(graph.features) - {graph.sensitive}
    issues = [f"Graph node '{n}' has no columns in the schema." for n in sorted(observed - set(schema.roles))]
    issues += [f"Schema role '{n}' is not a graph feature." for n in sorted(set(schema.roles) - observed)]
    return issues


def check_experiment(experiment_path):
    """Experiment config parses"""
    try:
        experiment_from_dict(load_json(experiment_path))
    except (ValueError, KeyError) as e:
        return [str(e)]
    return []


def report(name, checks):
    print(f"\n{'='*60}")
    print(f"Validating: {name}")
    print(f"{'='*60}")

    all_passed = True
    for check_name, check_func in checks:
        try:
            issues = check_func()
        except GraphValidationError as e:
            issues = e.issues
        if issues:
            all_passed = False
            print(f"\n❌ {check_name} FAILED:")
            for issue in issues:
                print(f"   • {issue}")
        else:
            print(f"✅ {check_name} passed")
    return all_passed


if __name__ == "__main__":
    graphs = sorted((DATA_DIR / 'graphs').glob('*.json'))
    schemas = sorted((DATA_DIR / 'schemas').glob('*.json'))
    experiments = sorted((DATA_DIR / 'experiments').glob('*.json'))
    print(f"Found {len(graphs)} graph(s), {len(schemas)} schema(s), {len(experiments)} experiment(s) to validate\n")

    all_valid = True
    for path in graphs:
        config = load_json(path)
        all_valid &= report(f"graph {path.name}", [
            ("Graph Structure", lambda c=config: check_graph_structure(c)),
            ("Unfair Pathways", lambda c=config: check_pathways(c)),
            ("Recanting Witness", lambda c=config: check_witness(c)),
            ("Weight Recipe", lambda c=config: check_weight_recipe(c)),
        ])
    for path in schemas:
        all_valid &= report(f"schema {path.name}", [("Role Map", lambda p=path: check_schema(p))])
    for path in experiments:
        all_valid &= report(f"experiment {path.name}", [("Experiment Config", lambda p=path: check_experiment(p))])

    print(f"\n{'='*60}")
    if all_valid:
        print("✅ ALL CONFIGS VALID")
    else:
        print("❌ SOME CONFIGS HAVE ISSUES - Review above")
    print(f"{'='*60}")
