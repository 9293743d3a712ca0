#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

namespace palign::numcore {

/// Dense row-major tensor of 64-bit floats. All model, dataset and
/// evaluation quantities live in this one type.
struct Tensor {
    std::vector<std::size_t> dims;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t numel() const { return data.size(); }
    std::size_t ndim() const { return dims.size(); }

    // 2-D accessors; shape is validated by the ops that care.
    std::size_t rows() const;
    std::size_t cols() const;
    double& at(std::size_t r, std::size_t c) { return data[r * dims[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * dims[1] + c]; }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    bool same_dims(const Tensor& other) const { return dims == other.dims; }
    bool all_finite() const;

    /// Row r of a 2-D tensor as a copied 1-D tensor.
    Tensor row(std::size_t r) const;
};

bool operator==(const Tensor& a, const Tensor& b);

/// Unit-normalized copy; NearZeroNorm if the norm is <= 1e-12.
Tensor l2_normalize(const Tensor& v);
double l2_norm(const Tensor& v);
double dot(const Tensor& a, const Tensor& b);

// --- PBT1 blob format ---------------------------------------------------
// magic "PBT1", u8 dtype (1 = f64 LE), u8 ndim, ndim x u64 LE dims,
// row-major f64 LE payload.

void write_pbt1(std::ostream& out, const Tensor& t);
Tensor read_pbt1(std::istream& in);

/// Serialized PBT1 byte size for a tensor of this shape.
std::size_t pbt1_size(const Tensor& t);

} // namespace palign::numcore
