#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace bcfmc {

// Little-endian container of named n-dimensional real arrays.
//
//   "BTFM" | u32 version | u32 record count
//   per record: u32 name length | UTF-8 name | u8 dtype (0 = f64, 1 = f32)
//               | u8 rank | rank x u64 dims | payload (column-major)
enum class DType : std::uint8_t { f64 = 0, f32 = 1 };

inline constexpr std::uint32_t kTensorFileVersion = 1;

struct TensorRecord {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::variant<std::vector<double>, std::vector<float>> data;

    DType dtype() const { return data.index() == 0 ? DType::f64 : DType::f32; }
    std::uint64_t element_count() const;
    int rank() const { return static_cast<int>(dims.size()); }
    // Values widened to double regardless of the stored dtype.
    std::vector<double> as_f64() const;
    Eigen::MatrixXd as_matrix() const;  // rank <= 2 only
    bool operator==(const TensorRecord&) const = default;
};

class TensorFile {
public:
    std::vector<TensorRecord> records;

    void add(TensorRecord rec);
    // Stores a matrix column-major with dims {rows, cols}.
    void add_matrix(const std::string& name, const Eigen::MatrixXd& m, DType dtype = DType::f64);
    void add_vector(const std::string& name, const Eigen::VectorXd& v, DType dtype = DType::f64);
    void add_scalars(const std::string& name, const std::vector<double>& v);

    const TensorRecord* find(const std::string& name) const;
    const TensorRecord& get(const std::string& name) const;  // throws IoError if absent

    void encode(std::ostream& os) const;
    static TensorFile decode(std::istream& is);

    void write(const std::string& path) const;
    static TensorFile read(const std::string& path);

    bool operator==(const TensorFile&) const = default;
};

}  // namespace bcfmc
