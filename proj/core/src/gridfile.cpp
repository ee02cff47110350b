#include "tfrmt/gridfile.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "grid files are little-endian; big-endian hosts are not supported");
static_assert(sizeof(double) == 8);

namespace tfrmt::gridfile {

namespace {

constexpr char kMagic[6] = {'T', 'F', 'R', 'M', 'T', '1'};

void put_real(std::vector<double>& out, const Eigen::MatrixXd& a) {
    out.resize(static_cast<size_t>(a.size()));
    // row-major on disk
    size_t q = 0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) out[q++] = a(i, j);
}

void put_cplx(std::vector<double>& out, const Eigen::MatrixXcd& a) {
    out.resize(static_cast<size_t>(2 * a.size()));
    size_t q = 0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out[q++] = a(i, j).real();
            out[q++] = a(i, j).imag();
        }
}

} // namespace

void Archive::add(const std::string& name, const Eigen::MatrixXd& a) {
    Entry e;
    e.name = name;
    e.dtype = "f8";
    e.rows = a.rows();
    e.cols = a.cols();
    put_real(e.data, a);
    entries.push_back(std::move(e));
}

void Archive::add(const std::string& name, const Eigen::MatrixXcd& a) {
    Entry e;
    e.name = name;
    e.dtype = "c16";
    e.rows = a.rows();
    e.cols = a.cols();
    put_cplx(e.data, a);
    entries.push_back(std::move(e));
}

void Archive::add(const std::string& name, const Eigen::VectorXd& a) {
    add(name, Eigen::MatrixXd(a));
}

void Archive::add(const std::string& name, const Eigen::VectorXcd& a) {
    add(name, Eigen::MatrixXcd(a));
}

bool Archive::has(const std::string& name) const {
    for (const Entry& e : entries)
        if (e.name == name) return true;
    return false;
}

const Archive::Entry& Archive::find(const std::string& name) const {
    for (const Entry& e : entries)
        if (e.name == name) return e;
    throw std::runtime_error("grid file: no array named '" + name + "'");
}

Eigen::MatrixXd Archive::real(const std::string& name) const {
    const Entry& e = find(name);
    if (e.dtype != "f8")
        throw std::runtime_error("grid file: array '" + name + "' is not real");
    Eigen::MatrixXd a(e.rows, e.cols);
    size_t q = 0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = e.data[q++];
    return a;
}

Eigen::MatrixXcd Archive::cplx(const std::string& name) const {
    const Entry& e = find(name);
    if (e.dtype != "c16")
        throw std::runtime_error("grid file: array '" + name + "' is not complex");
    Eigen::MatrixXcd a(e.rows, e.cols);
    size_t q = 0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            a(i, j) = {e.data[q], e.data[q + 1]};
            q += 2;
        }
    return a;
}

Eigen::VectorXd Archive::real_vec(const std::string& name) const {
    Eigen::MatrixXd a = real(name);
    if (a.cols() != 1)
        throw std::runtime_error("grid file: array '" + name + "' is not a column vector");
    return a.col(0);
}

void Archive::save(const std::filesystem::path& path) const {
    nlohmann::json header;
    header["format"] = 1;
    header["kind"] = kind;
    header["meta"] = meta;
    nlohmann::json dir = nlohmann::json::array();
    for (const Entry& e : entries)
        dir.push_back({{"name", e.name}, {"dtype", e.dtype}, {"rows", e.rows}, {"cols", e.cols}});
    header["arrays"] = dir;
    const std::string htext = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("grid file: cannot open for writing: " + path.string());
    os.write(kMagic, sizeof(kMagic));
    const std::uint64_t hlen = htext.size();
    os.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    os.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const Entry& e : entries)
        os.write(reinterpret_cast<const char*>(e.data.data()),
                 static_cast<std::streamsize>(e.data.size() * sizeof(double)));
    os.flush();
    if (!os) throw std::runtime_error("grid file: write failed: " + path.string());
}

Archive Archive::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("grid file: cannot open: " + path.string());

    char magic[sizeof(kMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("grid file: bad magic in " + path.string());

    std::uint64_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!is || hlen > (1ull << 30))
        throw std::runtime_error("grid file: corrupt header length in " + path.string());
    std::string htext(hlen, '\0');
    is.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw std::runtime_error("grid file: truncated header in " + path.string());

    nlohmann::json header = nlohmann::json::parse(htext, nullptr, false);
    if (header.is_discarded() || !header.contains("kind") || !header.contains("arrays"))
        throw std::runtime_error("grid file: malformed header in " + path.string());

    Archive ar;
    ar.kind = header["kind"].get<std::string>();
    ar.meta = header.value("meta", nlohmann::json::object());
    for (const nlohmann::json& d : header["arrays"]) {
        Entry e;
        e.name = d.at("name").get<std::string>();
        e.dtype = d.at("dtype").get<std::string>();
        e.rows = d.at("rows").get<std::int64_t>();
        e.cols = d.at("cols").get<std::int64_t>();
        if (e.rows < 0 || e.cols < 0 || (e.dtype != "f8" && e.dtype != "c16"))
            throw std::runtime_error("grid file: bad array directory in " + path.string());
        const std::int64_t mult = (e.dtype == "c16") ? 2 : 1;
        e.data.resize(static_cast<size_t>(e.rows * e.cols * mult));
        is.read(reinterpret_cast<char*>(e.data.data()),
                static_cast<std::streamsize>(e.data.size() * sizeof(double)));
        if (!is) throw std::runtime_error("grid file: truncated payload in " + path.string());
        ar.entries.push_back(std::move(e));
    }
    return ar;
}

namespace {

nlohmann::json merged(const nlohmann::json& base, const nlohmann::json& extra) {
    nlohmann::json out = base;
    for (auto it = extra.begin(); it != extra.end(); ++it) out[it.key()] = it.value();
    return out;
}

nlohmann::json source_meta(const SourceSpec& s) {
    return {{"f0", s.f0}, {"sigma_f", s.sigma_f}, {"z_src", s.z_src}, {"w_src", s.w_src}};
}

SourceSpec source_from_meta(const nlohmann::json& m) {
    SourceSpec s;
    s.f0 = m.at("f0").get<double>();
    s.sigma_f = m.at("sigma_f").get<double>();
    s.z_src = m.at("z_src").get<double>();
    s.w_src = m.at("w_src").get<double>();
    return s;
}

} // namespace

void save_unitary(const std::filesystem::path& path, const UnitaryPropagator& u,
                  const nlohmann::json& extra_meta) {
    Archive ar;
    ar.kind = "unitary";
    ar.meta = merged({{"k", u.k},
                      {"r", u.r},
                      {"m", u.U.rows()},
                      {"blocks", u.blocks},
                      {"origin", u.origin},
                      {"seed", u.seed},
                      {"defect", u.defect}},
                     extra_meta);
    ar.add("U", u.U);
    ar.save(path);
}

UnitaryPropagator load_unitary(const std::filesystem::path& path) {
    Archive ar = Archive::load(path);
    if (ar.kind != "unitary") throw std::runtime_error("grid file: not a unitary file");
    UnitaryPropagator u;
    u.U = ar.cplx("U");
    u.k = ar.meta.at("k").get<double>();
    u.r = ar.meta.at("r").get<double>();
    u.blocks = ar.meta.at("blocks").get<int>();
    u.origin = ar.meta.at("origin").get<std::string>();
    u.seed = ar.meta.at("seed").get<std::uint64_t>();
    u.defect = ar.meta.at("defect").get<double>();
    return u;
}

void save_variance(const std::filesystem::path& path, const VarianceProfile& vp,
                   const nlohmann::json& extra_meta) {
    Archive ar;
    ar.kind = "variance";
    ar.meta = merged({{"k", vp.k}, {"r_b", vp.r_b}, {"m", vp.s.rows()}}, extra_meta);
    ar.add("s", vp.s);
    ar.save(path);
}

VarianceProfile load_variance(const std::filesystem::path& path) {
    Archive ar = Archive::load(path);
    if (ar.kind != "variance") throw std::runtime_error("grid file: not a variance file");
    VarianceProfile vp;
    vp.s = ar.real("s");
    vp.k = ar.meta.at("k").get<double>();
    vp.r_b = ar.meta.at("r_b").get<double>();
    return vp;
}

void save_timefront(const std::filesystem::path& path, const TimefrontGrid& tg,
                    const nlohmann::json& extra_meta) {
    Archive ar;
    ar.kind = "timefront";
    ar.meta = merged({{"r", tg.r},
                      {"tau_center", tg.tau_center},
                      {"energy", tg.energy},
                      {"origin", tg.origin},
                      {"seed", tg.seed},
                      {"member", tg.member},
                      {"source", source_meta(tg.source)},
                      {"k0", tg.kgrid.k0},
                      {"sigma_k", tg.kgrid.sigma_k},
                      {"dk", tg.kgrid.dk}},
                     extra_meta);
    ar.add("phi", tg.phi);
    ar.add("z", tg.z);
    ar.add("tau", tg.tau);
    ar.add("k", tg.kgrid.k);
    ar.save(path);
}

TimefrontGrid load_timefront(const std::filesystem::path& path) {
    Archive ar = Archive::load(path);
    if (ar.kind != "timefront") throw std::runtime_error("grid file: not a timefront file");
    TimefrontGrid tg;
    tg.phi = ar.cplx("phi");
    tg.z = ar.real_vec("z");
    tg.tau = ar.real_vec("tau");
    tg.kgrid.k = ar.real_vec("k");
    tg.kgrid.k0 = ar.meta.at("k0").get<double>();
    tg.kgrid.sigma_k = ar.meta.at("sigma_k").get<double>();
    tg.kgrid.dk = ar.meta.at("dk").get<double>();
    tg.r = ar.meta.at("r").get<double>();
    tg.tau_center = ar.meta.at("tau_center").get<double>();
    tg.energy = ar.meta.at("energy").get<double>();
    tg.origin = ar.meta.at("origin").get<std::string>();
    tg.seed = ar.meta.at("seed").get<std::uint64_t>();
    tg.member = ar.meta.at("member").get<int>();
    tg.source = source_from_meta(ar.meta.at("source"));
    return tg;
}

void save_intensity(const std::filesystem::path& path, const IntensityGrid& ig,
                    const nlohmann::json& extra_meta) {
    Archive ar;
    ar.kind = "intensity";
    ar.meta = merged({{"r", ig.r}, {"members", ig.members}, {"origin", ig.origin}}, extra_meta);
    ar.add("I", ig.I);
    ar.add("I2", ig.I2);
    ar.add("z", ig.z);
    ar.add("tau", ig.tau);
    ar.save(path);
}

IntensityGrid load_intensity(const std::filesystem::path& path) {
    Archive ar = Archive::load(path);
    if (ar.kind != "intensity") throw std::runtime_error("grid file: not an intensity file");
    IntensityGrid ig;
    ig.I = ar.real("I");
    ig.I2 = ar.real("I2");
    ig.z = ar.real_vec("z");
    ig.tau = ar.real_vec("tau");
    ig.r = ar.meta.at("r").get<double>();
    ig.members = ar.meta.at("members").get<int>();
    ig.origin = ar.meta.at("origin").get<std::string>();
    return ig;
}

} // namespace tfrmt::gridfile
