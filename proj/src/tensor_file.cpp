#include "bcfmc/tensor_file.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "bcfmc/error.hpp"

namespace bcfmc {

namespace {

constexpr std::array<char, 4> kMagic{'B', 'T', 'F', 'M'};

template <class U>
void put_le(std::ostream& os, U value) {
    std::array<char, sizeof(U)> buf;
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
    os.write(buf.data(), buf.size());
}

template <class U>
U get_le(std::istream& is) {
    std::array<unsigned char, sizeof(U)> buf;
    if (!is.read(reinterpret_cast<char*>(buf.data()), buf.size()))
        throw IoError("tensor file truncated");
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(buf[i]) << (8 * i);
    return value;
}

}  // namespace

std::uint64_t TensorRecord::element_count() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

std::vector<double> TensorRecord::as_f64() const {
    if (const auto* d = std::get_if<std::vector<double>>(&data)) return *d;
    const auto& f = std::get<std::vector<float>>(data);
    return {f.begin(), f.end()};
}

Eigen::MatrixXd TensorRecord::as_matrix() const {
    BCFMC_REQUIRE(rank() <= 2, ShapeError, "record '" + name + "' is not a matrix");
    const Eigen::Index rows = rank() >= 1 ? static_cast<Eigen::Index>(dims[0]) : 1;
    const Eigen::Index cols = rank() == 2 ? static_cast<Eigen::Index>(dims[1]) : 1;
    const std::vector<double> v = as_f64();
    return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
}

void TensorFile::add(TensorRecord rec) {
    const std::uint64_t n = rec.element_count();
    const std::size_t stored = std::visit([](const auto& v) { return v.size(); }, rec.data);
    BCFMC_REQUIRE(n == stored, ShapeError, "record '" + rec.name + "' dims do not match payload");
    BCFMC_REQUIRE(rec.dims.size() <= 255, ShapeError, "rank exceeds 255");
    BCFMC_REQUIRE(find(rec.name) == nullptr, ContractError, "duplicate record '" + rec.name + "'");
    records.push_back(std::move(rec));
}

void TensorFile::add_matrix(const std::string& name, const Eigen::MatrixXd& m, DType dtype) {
    TensorRecord rec{name, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, {}};
    if (dtype == DType::f64)
        rec.data = std::vector<double>(m.data(), m.data() + m.size());
    else
        rec.data = std::vector<float>(m.data(), m.data() + m.size());
    add(std::move(rec));
}

void TensorFile::add_vector(const std::string& name, const Eigen::VectorXd& v, DType dtype) {
    TensorRecord rec{name, {static_cast<std::uint64_t>(v.size())}, {}};
    if (dtype == DType::f64)
        rec.data = std::vector<double>(v.data(), v.data() + v.size());
    else
        rec.data = std::vector<float>(v.data(), v.data() + v.size());
    add(std::move(rec));
}

void TensorFile::add_scalars(const std::string& name, const std::vector<double>& v) {
    add(TensorRecord{name, {static_cast<std::uint64_t>(v.size())}, v});
}

const TensorRecord* TensorFile::find(const std::string& name) const {
    for (const auto& r : records)
        if (r.name == name) return &r;
    return nullptr;
}

const TensorRecord& TensorFile::get(const std::string& name) const {
    const TensorRecord* r = find(name);
    if (!r) throw IoError("tensor file has no record '" + name + "'");
    return *r;
}

void TensorFile::encode(std::ostream& os) const {
    os.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(os, kTensorFileVersion);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(records.size()));
    for (const auto& r : records) {
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(r.name.size()));
        os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        put_le<std::uint8_t>(os, static_cast<std::uint8_t>(r.dtype()));
        put_le<std::uint8_t>(os, static_cast<std::uint8_t>(r.dims.size()));
        for (auto d : r.dims) put_le<std::uint64_t>(os, d);
        if (const auto* d = std::get_if<std::vector<double>>(&r.data)) {
            for (double x : *d) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(x));
        } else {
            for (float x : std::get<std::vector<float>>(r.data))
                put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(x));
        }
    }
    if (!os) throw IoError("failed writing tensor file");
}

TensorFile TensorFile::decode(std::istream& is) {
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kMagic)
        throw IoError("not a tensor file (bad magic)");
    const auto version = get_le<std::uint32_t>(is);
    if (version != kTensorFileVersion)
        throw IoError("unsupported tensor file version " + std::to_string(version));
    const auto count = get_le<std::uint32_t>(is);
    TensorFile file;
    for (std::uint32_t i = 0; i < count; ++i) {
        TensorRecord r;
        const auto len = get_le<std::uint32_t>(is);
        r.name.resize(len);
        if (len > 0 && !is.read(r.name.data(), len)) throw IoError("tensor file truncated");
        const auto dtype = get_le<std::uint8_t>(is);
        const auto rank = get_le<std::uint8_t>(is);
        for (int d = 0; d < rank; ++d) r.dims.push_back(get_le<std::uint64_t>(is));
        const std::uint64_t n = r.element_count();
        if (dtype == static_cast<std::uint8_t>(DType::f64)) {
            std::vector<double> v(n);
            for (auto& x : v) x = std::bit_cast<double>(get_le<std::uint64_t>(is));
            r.data = std::move(v);
        } else if (dtype == static_cast<std::uint8_t>(DType::f32)) {
            std::vector<float> v(n);
            for (auto& x : v) x = std::bit_cast<float>(get_le<std::uint32_t>(is));
            r.data = std::move(v);
        } else {
            throw IoError("unknown dtype " + std::to_string(dtype) + " in record '" + r.name + "'");
        }
        file.records.push_back(std::move(r));
    }
    return file;
}

void TensorFile::write(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    encode(os);
}

TensorFile TensorFile::read(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    return decode(is);
}

}  // namespace bcfmc
