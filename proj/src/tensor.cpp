#include "ismaf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ismaf {

std::string shape_str(const Shape& shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

std::size_t shape_numel(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values))
{
    if (shape_numel(shape_) != values_.size())
        throw DimensionError("tensor shape " + shape_str(shape_) + " does not hold " +
                             std::to_string(values_.size()) + " values");
}

Tensor Tensor::vector(std::vector<double> v)
{
    const std::size_t n = v.size();
    return Tensor(Shape{n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v)
{
    return Tensor(Shape{rows, cols}, std::move(v));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows)
{
    std::vector<double> v;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
        if (r.size() != cols) throw DimensionError("ragged matrix literal");
        v.insert(v.end(), r.begin(), r.end());
    }
    return Tensor(Shape{rows.size(), cols}, std::move(v));
}

Tensor Tensor::identity(std::size_t n)
{
    Tensor t(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

std::size_t Tensor::rows() const noexcept
{
    return shape_.size() < 2 ? 1 : shape_[0];
}

std::size_t Tensor::cols() const noexcept
{
    if (shape_.empty()) return 1;
    return shape_.back();
}

double Tensor::item() const
{
    if (values_.size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape_));
    return values_[0];
}

Tensor Tensor::reshaped(Shape shape) const
{
    return Tensor(std::move(shape), values_);
}

Tensor Tensor::transposed() const
{
    const std::size_t r = rows(), c = cols();
    Tensor out(Shape{c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.values_[j * r + i] = values_[i * c + j];
    return out;
}

void Tensor::add_inplace(const Tensor& other)
{
    if (other.numel() != numel())
        throw DimensionError("add_inplace: " + shape_str(shape_) + " vs " + shape_str(other.shape_));
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
}

void Tensor::fill(double v)
{
    std::fill(values_.begin(), values_.end(), v);
}

bool Tensor::all_finite() const noexcept
{
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Tensor& a, const Tensor& b)
{
    if (a.numel() != b.numel())
        throw DimensionError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace ismaf
