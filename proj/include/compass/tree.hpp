#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "compass/table.hpp"

namespace compass {

struct TreeParams {
    int max_depth = 0;            // 0 = unlimited
    double min_leaf_weight = 1.0; // minimum total sample weight per child
    int max_features = 0;         // features examined per split; 0 = all
};

/// Binary regression tree over encoded features with a `width`-wide leaf
/// vector (1 for scalar regression, K for class frequencies).
class DecisionTree {
public:
    struct Node {
        int feature = -1; // -1 marks a leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        int value = 0; // offset into values (leaves only)
    };

    int width() const { return width_; }
    int leaf_of(std::span<const double> x) const;
    std::span<const double> predict(std::span<const double> x) const;

    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<double>& values() const { return values_; }
    /// Overwrites a leaf's value vector (boosting re-estimates leaves).
    void set_leaf_value(int node, std::span<const double> value);

    static DecisionTree from_parts(int width, std::vector<Node> nodes, std::vector<double> values);

private:
    friend class TreeBuilder;
    int width_ = 1;
    std::vector<Node> nodes_;
    std::vector<double> values_;
};

/// Column-major copy of a feature matrix plus one presorted row order per
/// column. Built once per training matrix and shared by every tree grown on it.
class SortedFeatures {
public:
    explicit SortedFeatures(const Matrix& x);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return columns_.size(); }
    double value(std::size_t row, std::size_t col) const { return columns_[col][row]; }
    const std::vector<std::uint32_t>& order(std::size_t col) const { return orders_[col]; }

private:
    std::size_t rows_ = 0;
    std::vector<std::vector<double>> columns_;
    std::vector<std::vector<std::uint32_t>> orders_;
};

/// Grows a tree minimizing weighted squared error over `targets` (row-major,
/// rows x width). With one-hot targets the criterion equals Gini impurity.
/// Rows with zero weight are ignored. If `leaf_of_row` is given it receives the
/// leaf node of every row that took part in training (-1 for the others).
DecisionTree fit_tree(const SortedFeatures& features, std::span<const double> targets, int width,
                      std::span<const double> weights, const TreeParams& params, std::mt19937_64& rng,
                      std::vector<int>* leaf_of_row = nullptr);

} // namespace compass
