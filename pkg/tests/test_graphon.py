from fractions import Fraction

import numpy as np
import pytest

from limitforce.exceptions import InvalidArgumentError, UnsupportedFormError, UnsupportedSizeError
from limitforce.services.graphon import (
    BlockSizes,
    CliqueBlocks,
    Constant,
    Graph,
    PermutonInduced,
    Planted,
    Step,
    automorphism_count,
    clique_blocks_geometric,
    clique_union,
    complete_graph,
    constant_graph_density,
    density_mc,
    density_quadrature,
    empty_graph,
    graph_density,
    inversion_graph,
    is_isomorphic,
    isomorphism_classes,
    kernel,
    kernel_image,
    path_graph,
    planted_constant,
    sample_graph,
    sampled_kernel_image,
)
from limitforce.services.permutations import Permutation, all_patterns
from limitforce.services.permuton import (
    SquareGeometric,
    density_exact_diagonal,
    identity_segment,
    interleaved_segments,
    reversal_segment,
    sample_permutation,
)

K2 = complete_graph(2)
K3 = complete_graph(3)
P3 = path_graph(3)


def test_graph_parse_and_format():
    g = Graph.parse("4; 1-2, 3-2")
    assert g.order == 4
    assert g.edges == frozenset({(1, 2), (2, 3)})
    assert Graph.parse(str(g)) == g
    assert Graph.parse("3;") == empty_graph(3)


@pytest.mark.parametrize("text", ["x; 1-2", "3; 1-4", "3; 1-1", "3; 1-2-3"])
def test_graph_parse_errors(text):
    with pytest.raises(InvalidArgumentError):
        Graph.parse(text)


def test_isomorphism_helpers():
    assert is_isomorphic(P3, Graph.parse("3; 1-3,2-3"))
    assert not is_isomorphic(P3, K3)
    assert automorphism_count(complete_graph(4)) == 24
    assert automorphism_count(path_graph(4)) == 2
    assert [len(isomorphism_classes(k)) for k in range(1, 6)] == [1, 2, 4, 11, 34]
    with pytest.raises(UnsupportedSizeError):
        isomorphism_classes(6)


def test_graph_density_examples():
    assert graph_density(K2, K3) == 1
    cycle = Graph.parse("4; 1-2,2-3,3-4,1-4")
    assert graph_density(P3, cycle) == 1
    assert graph_density(clique_union((1, 2)), path_graph(4)) == Fraction(1, 2)
    assert graph_density(K3, K2) == 0


def test_inversion_graph():
    assert inversion_graph(Permutation.parse("132")) == Graph(3, frozenset({(2, 3)}))
    assert inversion_graph(Permutation.reversal(4)) == complete_graph(4)


def test_constant_graph_density_sums_to_one():
    rho = Fraction(1, 3)
    for k in (2, 3, 4):
        assert sum(constant_graph_density(h, rho) for h in isomorphism_classes(k)) == 1
    assert constant_graph_density(P3, Fraction(1, 2)) == Fraction(3, 8)


def test_block_sizes_geometric_locate():
    a = BlockSizes.geometric(0.5)
    index, start, width = a.locate(np.array([0.1, 0.6, 0.8]))
    assert index.tolist() == [1, 2, 3]
    assert np.allclose(start, [0.0, 0.5, 0.75])
    assert np.allclose(width, [0.5, 0.25, 0.125])
    assert a.power_sum(2) == pytest.approx(1 / 3)


def test_block_sizes_with_head_and_tail():
    b = BlockSizes.with_geometric_tail([0.4, 0.3], 0.5)
    assert b.total_mass() == pytest.approx(0.95)
    index, start, width = b.locate(np.array([0.2, 0.5, 0.75, 0.97]))
    assert index.tolist() == [1, 2, 3, 0]
    assert np.allclose(start[:3], [0.0, 0.4, 0.7])
    assert np.allclose(width[:3], [0.4, 0.3, 0.125])
    assert b.size(3) == pytest.approx(0.125)


def test_block_sizes_validation():
    with pytest.raises(InvalidArgumentError):
        BlockSizes((0.6, 0.6))
    with pytest.raises(InvalidArgumentError):
        BlockSizes((-0.1,))
    with pytest.raises(InvalidArgumentError):
        BlockSizes()


def test_kernel_examples():
    assert kernel(Constant(0.3), 0.2, 0.9) == pytest.approx(0.3)
    w = clique_blocks_geometric(0.5)
    assert kernel(w, 0.1, 0.4) == 1.0
    assert kernel(w, 0.1, 0.6) == 0.0
    planted = planted_constant(0.5, 0.5)
    assert kernel(planted, 0.6, 0.7) == 0.5
    assert kernel(planted, 0.2, 0.6) == 0.0


def test_kernel_errors():
    with pytest.raises(InvalidArgumentError):
        kernel(Constant(0.5), 1.0, 0.5)
    with pytest.raises(UnsupportedFormError):
        kernel(PermutonInduced(reversal_segment()), 0.2, 0.3)
    with pytest.raises(UnsupportedFormError):
        Planted(PermutonInduced(reversal_segment()), BlockSizes.geometric(0.5))


def test_graphon_validation():
    with pytest.raises(InvalidArgumentError):
        Constant(1.5)
    with pytest.raises(InvalidArgumentError):
        Step(((0.0, 1.0), (0.5, 0.0)), (0.5, 0.5))
    with pytest.raises(InvalidArgumentError):
        Step(((1.0,),), (0.9,))


def test_sample_graph_extremes():
    assert sample_graph(Constant(1.0), 5, seed=1) == complete_graph(5)
    assert sample_graph(Constant(0.0), 5, seed=1) == empty_graph(5)
    assert sample_graph(PermutonInduced(reversal_segment()), 6, seed=2) == complete_graph(6)
    assert sample_graph(PermutonInduced(identity_segment()), 6, seed=2) == empty_graph(6)
    with pytest.raises(InvalidArgumentError):
        sample_graph(Constant(0.5), 0, seed=1)


def test_sample_graph_deterministic():
    w = Constant(0.5)
    assert sample_graph(w, 12, seed=7) == sample_graph(w, 12, seed=7)


def test_quadrature_constant_and_step():
    assert density_quadrature(K3, Constant(0.5)) == pytest.approx(1 / 8, abs=1e-12)
    assert density_quadrature(P3, Constant(0.5)) == pytest.approx(3 / 8, abs=1e-12)
    w = Step(((1.0, 0.0), (0.0, 0.5)), (0.5, 0.5))
    assert density_quadrature(K2, w) == pytest.approx(0.375, abs=1e-12)


def test_quadrature_errors():
    with pytest.raises(UnsupportedFormError):
        density_quadrature(K2, PermutonInduced(reversal_segment()))
    with pytest.raises(UnsupportedSizeError):
        density_quadrature(complete_graph(6), Constant(0.5))


def test_quadrature_clique_blocks():
    value = density_quadrature(K2, CliqueBlocks(BlockSizes((0.5, 0.5))), grid=32)
    assert value == pytest.approx(0.5, abs=1e-12)


def test_monte_carlo_clique_blocks():
    w = clique_blocks_geometric(0.5)
    estimate = density_mc(K2, w, 100_000, seed=3)
    assert estimate.within(1 / 3, 4.0, 0.0)
    assert density_mc(P3, w, 50_000, seed=3).value == 0.0


def test_monte_carlo_sums_to_one_over_classes():
    w = planted_constant(0.5, 0.5)
    total = sum(density_mc(h, w, 20_000, seed=5).value for h in isomorphism_classes(3))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_monte_carlo_inversion_graphon_matches_permutation_density():
    estimate = density_mc(K2, PermutonInduced(reversal_segment()), 1000, seed=1)
    assert estimate.value == 1.0
    with pytest.raises(UnsupportedSizeError):
        density_mc(complete_graph(9), Constant(0.5), 10, seed=1)


def test_kernel_images():
    assert not kernel_image(Constant(0.0), 16).any()
    image = kernel_image(clique_blocks_geometric(0.5), 16)
    assert image[0, 7] == 1.0 and image[0, 8] == 0.0
    sampled = sampled_kernel_image(PermutonInduced(reversal_segment()), 8, seed=1)
    assert np.array_equal(sampled, 1.0 - np.eye(8))


@pytest.mark.parametrize("h", [K2, K3, P3], ids=str)
def test_quadrature_matches_monte_carlo_on_step_graphon(h):
    w = Step(((0.9, 0.2), (0.2, 0.5)), (0.25, 0.75))
    estimate = density_mc(h, w, 200_000, seed=21)
    assert estimate.within(density_quadrature(h, w), 4.0, 1e-4)


def test_step_graphon_edge_density_by_quadrature():
    w = Step(((0.9, 0.2), (0.2, 0.5)), (0.25, 0.75))
    # 1/16 * 0.9 + 2 * 3/16 * 0.2 + 9/16 * 0.5
    assert density_quadrature(K2, w) == pytest.approx(0.4125, abs=1e-12)


def inversion_class_density(h, mu):
    return sum(
        density_exact_diagonal(mu, sigma)
        for sigma in all_patterns(h.order)
        if is_isomorphic(inversion_graph(sigma), h)
    )


@pytest.mark.parametrize("h", [K2, K3, P3, Graph.parse("3; 1-2")], ids=str)
def test_permuton_induced_density_matches_sampled_permutations(h):
    mu = SquareGeometric(0.5)
    exact = inversion_class_density(h, mu)
    trials = 3000
    hits = sum(
        is_isomorphic(inversion_graph(sample_permutation(mu, h.order, seed)), h)
        for seed in range(trials)
    )
    spread = 4 * np.sqrt(exact * (1 - exact) / trials) + 1e-3
    assert abs(hits / trials - exact) <= spread
    estimate = density_mc(h, PermutonInduced(mu), 100_000, seed=8)
    assert estimate.within(exact, 4.0, 1e-4)


def test_interleaved_inversion_graph_is_sampled_consistently():
    mu = interleaved_segments()
    trials = 3000
    hits = sum(
        is_isomorphic(inversion_graph(sample_permutation(mu, 2, seed)), K2)
        for seed in range(trials)
    )
    estimate = density_mc(K2, PermutonInduced(mu), 100_000, seed=8)
    # one point on each segment, inverted when the left-segment point sits higher
    assert estimate.within(0.25, 4.0, 1e-4)
    assert abs(hits / trials - 0.25) <= 4 * np.sqrt(0.25 * 0.75 / trials)
