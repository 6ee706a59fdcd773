#include "utaam/model_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "utaam/errors.hpp"
#include "utaam/tensor_io.hpp"

namespace utaam {

namespace {

constexpr char kMagic[4] = {'U', 'T', 'A', 'M'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw IoError("UTAM: unexpected end of stream");
    return v;
}

void write_chunk(std::ostream& out, const std::string& name, const std::string& payload) {
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint64_t>(out, payload.size());
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

DenseTensor matrix_tensor(const Eigen::MatrixXd& m) {
    DenseTensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            t[static_cast<std::size_t>(r) * m.cols() + static_cast<std::size_t>(c)] = m(r, c);
    return t;
}

Eigen::MatrixXd tensor_matrix(const DenseTensor& t) {
    if (t.order() != 2) throw IoError("UTAM: expected a 2-way tensor payload");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(t.dims()[0]), static_cast<Eigen::Index>(t.dims()[1]));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            m(r, c) = t[static_cast<std::size_t>(r) * t.dims()[1] + static_cast<std::size_t>(c)];
    return m;
}

DenseTensor vector_tensor(const Eigen::VectorXd& v) {
    DenseTensor t({static_cast<std::size_t>(v.size())});
    for (Eigen::Index k = 0; k < v.size(); ++k) t[static_cast<std::size_t>(k)] = v[k];
    return t;
}

Eigen::VectorXd tensor_vector(const DenseTensor& t) {
    if (t.order() != 1) throw IoError("UTAM: expected a 1-way tensor payload");
    Eigen::VectorXd v(static_cast<Eigen::Index>(t.size()));
    for (std::size_t k = 0; k < t.size(); ++k) v[static_cast<Eigen::Index>(k)] = t[k];
    return v;
}

std::string tensor_payload(const DenseTensor& t) {
    std::ostringstream out(std::ios::binary);
    write_tensor(out, t);
    return std::move(out).str();
}

DenseTensor payload_tensor(const std::string& payload) {
    std::istringstream in(payload, std::ios::binary);
    return read_tensor(in);
}

std::string mesh_payload(const ReferenceMesh& mesh) {
    std::ostringstream out(std::ios::binary);
    const FaceShape& ref = mesh.reference();
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ref.landmark_count()));
    for (Eigen::Index k = 0; k < ref.coords.size(); ++k) write_pod<double>(out, ref.coords[k]);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(mesh.triangles().size()));
    for (const auto& tri : mesh.triangles())
        for (int idx : tri) write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(idx));
    return std::move(out).str();
}

ReferenceMesh payload_mesh(const std::string& payload) {
    std::istringstream in(payload, std::ios::binary);
    const std::uint32_t n = read_pod<std::uint32_t>(in);
    Eigen::VectorXd coords(static_cast<Eigen::Index>(2 * n));
    for (Eigen::Index k = 0; k < coords.size(); ++k) coords[k] = read_pod<double>(in);
    const std::uint32_t t = read_pod<std::uint32_t>(in);
    std::vector<std::array<int, 3>> tris(t);
    for (auto& tri : tris)
        for (int& idx : tri) idx = static_cast<int>(read_pod<std::uint32_t>(in));
    return ReferenceMesh(FaceShape(std::move(coords)), std::move(tris));
}

std::string hog_payload(const HogSpec& hog) {
    std::ostringstream out(std::ios::binary);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(hog.patch_side));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(hog.cell_side));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(hog.bins));
    write_pod<double>(out, hog.epsilon);
    return std::move(out).str();
}

HogSpec payload_hog(const std::string& payload) {
    std::istringstream in(payload, std::ios::binary);
    HogSpec hog;
    hog.patch_side = read_pod<std::uint32_t>(in);
    hog.cell_side = read_pod<std::uint32_t>(in);
    hog.bins = read_pod<std::uint32_t>(in);
    hog.epsilon = read_pod<double>(in);
    return hog;
}

std::string cascade_payload(const CascadeRegressor& cascade) {
    std::ostringstream out(std::ios::binary);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cascade.stages.size()));
    write_pod<double>(out, cascade.lambda);
    const std::string hog = hog_payload(cascade.hog);
    out.write(hog.data(), static_cast<std::streamsize>(hog.size()));
    write_pod<double>(out, cascade.init.rotation);
    write_pod<double>(out, cascade.init.scale_per_box_height);
    for (const auto& stage : cascade.stages) {
        write_tensor(out, matrix_tensor(stage.projection));
        write_tensor(out, vector_tensor(stage.offset));
    }
    return std::move(out).str();
}

CascadeRegressor payload_cascade(const std::string& payload) {
    std::istringstream in(payload, std::ios::binary);
    CascadeRegressor cascade;
    const std::uint32_t m = read_pod<std::uint32_t>(in);
    cascade.lambda = read_pod<double>(in);
    cascade.hog.patch_side = read_pod<std::uint32_t>(in);
    cascade.hog.cell_side = read_pod<std::uint32_t>(in);
    cascade.hog.bins = read_pod<std::uint32_t>(in);
    cascade.hog.epsilon = read_pod<double>(in);
    cascade.init.rotation = read_pod<double>(in);
    cascade.init.scale_per_box_height = read_pod<double>(in);
    cascade.stages.resize(m);
    for (auto& stage : cascade.stages) {
        stage.projection = tensor_matrix(read_tensor(in));
        stage.offset = tensor_vector(read_tensor(in));
    }
    return cascade;
}

}  // namespace

void save_model(const std::filesystem::path& path, const UtaamModel& model,
                const CascadeRegressor* cascade) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());

    out.write(kMagic, sizeof kMagic);
    write_pod<std::uint32_t>(out, kVersion);
    write_chunk(out, "MEAN_S", tensor_payload(vector_tensor(model.mean_shape)));
    write_chunk(out, "MEAN_T", tensor_payload(vector_tensor(model.mean_texture)));
    write_chunk(out, "CORE_S", tensor_payload(model.shape_core));
    write_chunk(out, "CORE_T", tensor_payload(model.texture_core));
    write_chunk(out, "MODE_S_I", tensor_payload(matrix_tensor(model.shape_identity)));
    write_chunk(out, "MODE_S_P", tensor_payload(matrix_tensor(model.shape_pose)));
    write_chunk(out, "MODE_S_E", tensor_payload(matrix_tensor(model.shape_expression)));
    write_chunk(out, "MODE_T_I", tensor_payload(matrix_tensor(model.texture_identity)));
    write_chunk(out, "MODE_T_P", tensor_payload(matrix_tensor(model.texture_pose)));
    write_chunk(out, "MODE_T_L", tensor_payload(matrix_tensor(model.texture_illumination)));
    write_chunk(out, "MODE_T_E", tensor_payload(matrix_tensor(model.texture_expression)));
    write_chunk(out, "MESH", mesh_payload(model.mesh));
    write_chunk(out, "HOG", hog_payload(model.hog));
    if (cascade) write_chunk(out, "CASC", cascade_payload(*cascade));
    if (!out) throw IoError("UTAM write failed: " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());

    char magic[4] = {};
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw IoError("UTAM: bad magic bytes in " + path.string());
    if (read_pod<std::uint32_t>(in) != kVersion)
        throw IoError("UTAM: unsupported version in " + path.string());

    std::map<std::string, std::string> chunks;
    while (true) {
        int peek = in.peek();
        if (peek == std::char_traits<char>::eof()) break;
        const std::uint8_t name_len = read_pod<std::uint8_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const std::uint64_t payload_len = read_pod<std::uint64_t>(in);
        std::string payload(payload_len, '\0');
        in.read(payload.data(), static_cast<std::streamsize>(payload_len));
        if (!in) throw IoError("UTAM: truncated chunk " + name);
        if (!chunks.emplace(std::move(name), std::move(payload)).second)
            throw IoError("UTAM: duplicate chunk");
    }

    auto chunk = [&](const char* name) -> const std::string& {
        auto it = chunks.find(name);
        if (it == chunks.end())
            throw IoError("UTAM: missing chunk " + std::string(name) + " in " + path.string());
        return it->second;
    };

    static const char* kKnown[] = {"MEAN_S",   "MEAN_T",   "CORE_S",   "CORE_T",   "MODE_S_I",
                                   "MODE_S_P", "MODE_S_E", "MODE_T_I", "MODE_T_P", "MODE_T_L",
                                   "MODE_T_E", "MESH",     "HOG",      "CASC"};
    for (const auto& [name, payload] : chunks) {
        bool known = false;
        for (const char* k : kKnown) known = known || name == k;
        if (!known) throw IoError("UTAM: unknown chunk " + name);
    }

    ModelFile file;
    file.model.mean_shape = tensor_vector(payload_tensor(chunk("MEAN_S")));
    file.model.mean_texture = tensor_vector(payload_tensor(chunk("MEAN_T")));
    file.model.shape_core = payload_tensor(chunk("CORE_S"));
    file.model.texture_core = payload_tensor(chunk("CORE_T"));
    file.model.shape_identity = tensor_matrix(payload_tensor(chunk("MODE_S_I")));
    file.model.shape_pose = tensor_matrix(payload_tensor(chunk("MODE_S_P")));
    file.model.shape_expression = tensor_matrix(payload_tensor(chunk("MODE_S_E")));
    file.model.texture_identity = tensor_matrix(payload_tensor(chunk("MODE_T_I")));
    file.model.texture_pose = tensor_matrix(payload_tensor(chunk("MODE_T_P")));
    file.model.texture_illumination = tensor_matrix(payload_tensor(chunk("MODE_T_L")));
    file.model.texture_expression = tensor_matrix(payload_tensor(chunk("MODE_T_E")));
    file.model.mesh = payload_mesh(chunk("MESH"));
    file.model.hog = payload_hog(chunk("HOG"));
    if (chunks.count("CASC")) file.cascade = payload_cascade(chunk("CASC"));

    if (file.model.mesh.texture_size() != static_cast<std::size_t>(file.model.mean_texture.size()))
        throw IoError("UTAM: mesh lattice size disagrees with the texture mean in " + path.string());
    return file;
}

}  // namespace utaam
