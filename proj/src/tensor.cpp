#include "palign/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>

#include "palign/errors.hpp"

namespace palign::numcore {

namespace {

std::size_t checked_numel(const std::vector<std::size_t>& dims) {
    if (dims.empty()) throw DimMismatch("tensor must have at least one dimension");
    std::size_t n = 1;
    for (std::size_t d : dims) {
        if (d == 0) throw DimMismatch("tensor extents must be positive");
        n *= d;
    }
    return n;
}

void put_u64_le(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64_le(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw FormatError("PBT1: truncated header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape) {
    std::size_t n = checked_numel(shape);
    dims = std::move(shape);
    data.assign(n, 0.0);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    for (double& x : t.data) x = value;
    return t;
}

Tensor Tensor::scalar(double value) {
    Tensor t({1});
    t.data[0] = value;
    return t;
}

Tensor Tensor::vector(std::vector<double> values) {
    if (values.empty()) throw DimMismatch("vector tensor cannot be empty");
    Tensor t;
    t.dims = {values.size()};
    t.data = std::move(values);
    return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    if (rows * cols != values.size())
        throw DimMismatch("matrix: rows*cols does not match value count");
    Tensor t;
    t.dims = {rows, cols};
    t.data = std::move(values);
    return t;
}

std::size_t Tensor::rows() const {
    if (dims.size() != 2) throw DimMismatch("rows(): tensor is not 2-D");
    return dims[0];
}

std::size_t Tensor::cols() const {
    if (dims.size() != 2) throw DimMismatch("cols(): tensor is not 2-D");
    return dims[1];
}

bool Tensor::all_finite() const {
    for (double x : data)
        if (!std::isfinite(x)) return false;
    return true;
}

Tensor Tensor::row(std::size_t r) const {
    if (dims.size() != 2) throw DimMismatch("row(): tensor is not 2-D");
    if (r >= dims[0]) throw DimMismatch("row(): index out of range");
    Tensor out({dims[1]});
    for (std::size_t c = 0; c < dims[1]; ++c) out.data[c] = at(r, c);
    return out;
}

bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims == b.dims && a.data == b.data;
}

double l2_norm(const Tensor& v) {
    double s = 0.0;
    for (double x : v.data) s += x * x;
    return std::sqrt(s);
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw DimMismatch("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a.data[i] * b.data[i];
    return s;
}

Tensor l2_normalize(const Tensor& v) {
    if (v.numel() == 0) throw DimMismatch("l2_normalize: empty tensor");
    double n = l2_norm(v);
    if (n <= 1e-12) throw NearZeroNorm("l2_normalize: norm <= 1e-12");
    Tensor out = v;
    for (double& x : out.data) x /= n;
    return out;
}

void write_pbt1(std::ostream& out, const Tensor& t) {
    if (t.dims.empty() || t.numel() == 0) throw DimMismatch("PBT1: cannot write empty tensor");
    if (t.dims.size() > 255) throw DimMismatch("PBT1: too many dimensions");
    out.write("PBT1", 4);
    unsigned char dtype = 1;
    unsigned char ndim = static_cast<unsigned char>(t.dims.size());
    out.write(reinterpret_cast<const char*>(&dtype), 1);
    out.write(reinterpret_cast<const char*>(&ndim), 1);
    for (std::size_t d : t.dims) put_u64_le(out, d);
    for (double x : t.data) put_u64_le(out, std::bit_cast<std::uint64_t>(x));
    if (!out) throw IoError("PBT1: write failed");
}

Tensor read_pbt1(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string_view(magic, 4) != "PBT1")
        throw FormatError("PBT1: bad magic");
    unsigned char dtype = 0, ndim = 0;
    in.read(reinterpret_cast<char*>(&dtype), 1);
    in.read(reinterpret_cast<char*>(&ndim), 1);
    if (!in) throw FormatError("PBT1: truncated header");
    if (dtype != 1) throw FormatError("PBT1: unsupported dtype code");
    if (ndim == 0) throw FormatError("PBT1: zero-dimensional tensor");
    std::vector<std::size_t> dims(ndim);
    std::size_t n = 1;
    for (auto& d : dims) {
        std::uint64_t v = get_u64_le(in);
        if (v == 0) throw FormatError("PBT1: zero extent");
        d = static_cast<std::size_t>(v);
        n *= d;
    }
    Tensor t;
    t.dims = std::move(dims);
    t.data.resize(n);
    for (double& x : t.data) {
        unsigned char b[8];
        in.read(reinterpret_cast<char*>(b), 8);
        if (!in) throw FormatError("PBT1: truncated payload");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        x = std::bit_cast<double>(v);
    }
    return t;
}

std::size_t pbt1_size(const Tensor& t) {
    return 4 + 1 + 1 + 8 * t.dims.size() + 8 * t.numel();
}

} // namespace palign::numcore
