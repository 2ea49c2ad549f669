"""Directed acyclic graphs and d-separation queries.

Graph files hold one statement per line or per ``;``. A statement is either
a declaration ``vertex A`` or an edge chain ``A -> B [-> C ...]``. Anything
after ``#`` is a comment. If any vertex is declared, the vertex set is closed
and edges must only reference declared vertices; otherwise the vertex set is
whatever the edges mention.

"""
import heapq
import itertools
import re
from collections import deque
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Set, Tuple

VERTEX_PATTERN = re.compile(r'^[A-Za-z_][A-Za-z0-9_.\-]*$')


class GraphError(ValueError):
    pass


class AcyclicityError(GraphError):

    def __init__(self, cycle: List[str]):
        self.cycle = cycle
        super().__init__(f'Graph is not acyclic: {" -> ".join(cycle + cycle[:1])}.')


class UnknownVertexError(GraphError):
    pass


class Dag(NamedTuple):
    vertices: Tuple[str, ...]
    parents: Dict[str, FrozenSet[str]]

    @property
    def edges(self) -> List[Tuple[str, str]]:
        return sorted((parent, child) for child in self.vertices for parent in self.parents[child])

    def children(self, vertex: str) -> FrozenSet[str]:
        self.check(vertex)
        return frozenset(child for child in self.vertices if vertex in self.parents[child])

    def ancestors(self, vertices: Iterable[str]) -> Set[str]:
        """The given vertices together with all their ancestors."""
        frontier = list(vertices)
        self.check(*frontier)
        found = set(frontier)
        while frontier:
            vertex = frontier.pop()
            for parent in self.parents[vertex]:
                if parent not in found:
                    found.add(parent)
                    frontier.append(parent)
        return found

    def check(self, *vertices: str) -> None:
        for vertex in vertices:
            if vertex not in self.parents:
                raise UnknownVertexError(f'Unknown vertex {vertex}. Known vertices: {list(self.vertices)}.')


def make_dag(vertices: Iterable[str], edges: Iterable[Tuple[str, str]]) -> Dag:
    vertices = tuple(dict.fromkeys(vertices))
    parents = {vertex: set() for vertex in vertices}
    for parent, child in edges:
        for vertex in (parent, child):
            if vertex not in parents:
                raise UnknownVertexError(f'Edge {parent} -> {child} references undeclared vertex {vertex}.')
        if parent == child:
            raise AcyclicityError([parent])
        parents[child].add(parent)
    dag = Dag(vertices, {vertex: frozenset(ps) for vertex, ps in parents.items()})
    topological_order(dag)
    return dag


def parse_dag(text: str) -> Dag:
    declared = []
    edges = []
    mentioned = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0]
        for statement in line.split(';'):
            statement = statement.strip()
            if not statement:
                continue
            if statement.startswith('vertex ') or statement.startswith('vertex\t'):
                names = [name.strip() for name in statement.split(None, 1)[1].split(',')]
                for name in names:
                    _check_name(name, line_number)
                declared.extend(names)
            elif '->' in statement:
                chain = [name.strip() for name in statement.split('->')]
                for name in chain:
                    _check_name(name, line_number)
                mentioned.extend(chain)
                edges.extend(zip(chain[:-1], chain[1:]))
            else:
                raise GraphError(f'Line {line_number}: cannot parse statement {statement!r}.')

    vertices = declared if declared else mentioned
    return make_dag(vertices, edges)


def _check_name(name: str, line_number: int) -> None:
    if not VERTEX_PATTERN.match(name):
        raise GraphError(f'Line {line_number}: invalid vertex name {name!r}.')


def topological_order(g: Dag) -> List[str]:
    """Kahn's algorithm, breaking ties by vertex name."""
    in_degree = {vertex: len(g.parents[vertex]) for vertex in g.vertices}
    children = {vertex: [] for vertex in g.vertices}
    for child in g.vertices:
        for parent in g.parents[child]:
            children[parent].append(child)

    ready = [vertex for vertex, degree in in_degree.items() if degree == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        vertex = heapq.heappop(ready)
        order.append(vertex)
        for child in children[vertex]:
            in_degree[child] -= 1
            if in_degree[child] == 0:
                heapq.heappush(ready, child)

    if len(order) < len(g.vertices):
        remaining = {vertex for vertex in g.vertices if in_degree[vertex] > 0}
        raise AcyclicityError(_find_cycle(g, remaining))
    return order


def _find_cycle(g: Dag, remaining: Set[str]) -> List[str]:
    # every vertex left over by Kahn's algorithm has a parent that is also left over
    vertex = min(remaining)
    path = []
    seen = {}
    while vertex not in seen:
        seen[vertex] = len(path)
        path.append(vertex)
        vertex = min(parent for parent in g.parents[vertex] if parent in remaining)
    cycle = path[seen[vertex]:]
    return list(reversed(cycle))


################
# d-separation #
################

def d_separated(g: Dag, a: str, b: str, S: Iterable[str] = ()) -> bool:
    """Whether ``a`` and ``b`` are d-separated given ``S``.

    Runs a reachability search over (vertex, direction) states: a trail may
    pass a non-collider outside ``S``, and a collider only if the collider is
    in ``S`` or is an ancestor of ``S``.

    """
    S = frozenset(S)
    _check_query(g, a, b, S)
    ancestors_of_s = g.ancestors(S)
    children = {vertex: [] for vertex in g.vertices}
    for child in g.vertices:
        for parent in g.parents[child]:
            children[parent].append(child)

    # 'up' means the trail arrived from a child, 'down' that it arrived from a parent
    start = (a, 'up')
    queue = deque([start])
    visited = {start}
    while queue:
        vertex, direction = queue.popleft()
        if vertex == b and vertex not in S:
            return False
        following = []
        if direction == 'up' and vertex not in S:
            following.extend((parent, 'up') for parent in g.parents[vertex])
            following.extend((child, 'down') for child in children[vertex])
        elif direction == 'down':
            if vertex not in S:
                following.extend((child, 'down') for child in children[vertex])
            if vertex in ancestors_of_s:
                following.extend((parent, 'up') for parent in g.parents[vertex])
        for state in following:
            if state not in visited:
                visited.add(state)
                queue.append(state)
    return True


def d_separated_moral(g: Dag, a: str, b: str, S: Iterable[str] = ()) -> bool:
    """d-separation by separation in the moral graph of the ancestral set.

    Slower than :func:`d_separated`; kept as an independent oracle.

    """
    S = frozenset(S)
    _check_query(g, a, b, S)
    ancestral = g.ancestors({a, b} | S)
    neighbours = {vertex: set() for vertex in ancestral}
    for child in ancestral:
        parents = [parent for parent in g.parents[child] if parent in ancestral]
        for parent in parents:
            neighbours[parent].add(child)
            neighbours[child].add(parent)
        for left, right in itertools.combinations(parents, 2):
            neighbours[left].add(right)
            neighbours[right].add(left)

    frontier = [a]
    reached = {a}
    while frontier:
        vertex = frontier.pop()
        for neighbour in neighbours[vertex]:
            if neighbour in S or neighbour in reached:
                continue
            if neighbour == b:
                return False
            reached.add(neighbour)
            frontier.append(neighbour)
    return True


def _check_query(g: Dag, a: str, b: str, S: FrozenSet[str]) -> None:
    g.check(a, b, *S)
    if a == b:
        raise ValueError(f'd-separation needs two distinct vertices, got {a} twice.')
    if a in S or b in S:
        raise ValueError(f'Query vertices {a} and {b} must not be in the conditioning set {sorted(S)}.')
