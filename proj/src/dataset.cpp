#include "hrge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

#include "hrge/binary_io.hpp"
#include "hrge/errors.hpp"

namespace hrge {

namespace {

std::string record_tag(std::size_t index, const std::string& id) {
    return "record " + std::to_string(index) + " ('" + id + "')";
}

FeatureDataset empty_like(const FeatureDataset& ds) {
    FeatureDataset out;
    out.num_classes = ds.num_classes;
    out.num_fine_classes = ds.num_fine_classes;
    out.views = ds.views;
    out.dim = ds.dim;
    return out;
}

} // namespace

void FeatureDataset::validate() const {
    if (views == 0 || dim == 0) throw DataError("dataset header: N and D must be positive");
    if (num_classes == 0) throw DataError("dataset header: num_classes must be positive");
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.views.rows() != views || r.views.cols() != dim) {
            throw DataError(record_tag(i, r.id) + ": views are " + std::to_string(r.views.rows()) + "x" +
                            std::to_string(r.views.cols()) + ", header says " + std::to_string(views) + "x" +
                            std::to_string(dim));
        }
        if (r.coarse_label >= num_classes) {
            throw DataError(record_tag(i, r.id) + ": coarse label " + std::to_string(r.coarse_label) +
                            " >= num_classes " + std::to_string(num_classes));
        }
        if (r.fine_label) {
            if (num_fine_classes == 0) throw DataError(record_tag(i, r.id) + ": fine label present but header declares none");
            if (*r.fine_label >= num_fine_classes) {
                throw DataError(record_tag(i, r.id) + ": fine label " + std::to_string(*r.fine_label) +
                                " >= num_fine_classes " + std::to_string(num_fine_classes));
            }
        }
        if (r.id.size() > 0xFFFF) throw DataError(record_tag(i, "...") + ": id longer than 65535 bytes");
        if (!r.views.all_finite()) throw DataError(record_tag(i, r.id) + ": non-finite feature value");
        if (!seen.insert(r.id).second) throw DataError(record_tag(i, r.id) + ": duplicate id");
    }
}

std::string encode_dataset(const FeatureDataset& ds, std::string_view magic) {
    ds.validate();
    io::ByteWriter w;
    w.bytes(magic);
    w.u32(kFeatureVersion);
    w.u32(static_cast<std::uint32_t>(ds.records.size()));
    w.u32(static_cast<std::uint32_t>(ds.views));
    w.u32(static_cast<std::uint32_t>(ds.dim));
    w.u32(static_cast<std::uint32_t>(ds.num_classes));
    w.u32(static_cast<std::uint32_t>(ds.num_fine_classes));
    for (const auto& r : ds.records) {
        w.u16(static_cast<std::uint16_t>(r.id.size()));
        w.bytes(r.id);
        w.u32(static_cast<std::uint32_t>(r.coarse_label));
        w.u32(r.fine_label ? static_cast<std::uint32_t>(*r.fine_label) : kNoFineLabel);
        for (double v : r.views.values()) w.f64(v);
    }
    return w.take();
}

FeatureDataset decode_dataset(std::string_view bytes, std::string_view magic) {
    io::ByteReader in(bytes);
    const std::string got = in.bytes(magic.size(), "magic");
    if (got != magic) throw DataError("bad magic at byte offset 0: expected '" + std::string(magic) + "'");
    const std::size_t version_at = in.offset();
    const auto version = in.u32("version");
    if (version != kFeatureVersion) {
        throw DataError("unsupported version " + std::to_string(version) + " at byte offset " + std::to_string(version_at));
    }
    FeatureDataset ds;
    const auto count = in.u32("record count");
    ds.views = in.u32("N");
    ds.dim = in.u32("D");
    ds.num_classes = in.u32("num_classes");
    ds.num_fine_classes = in.u32("num_fine_classes");
    if (ds.views == 0 || ds.dim == 0) throw DataError("header: N and D must be positive");
    const std::size_t payload = ds.views * ds.dim;
    // A record takes at least 10 + 8*N*D bytes; bounds the reservation for corrupt counts.
    ds.records.reserve(std::min<std::size_t>(count, in.remaining() / (10 + 8 * payload)));
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string where = "record " + std::to_string(i);
        ShapeRecord r;
        const auto id_len = in.u16(where + " id length");
        r.id = in.bytes(id_len, where + " id");
        r.coarse_label = in.u32(where + " coarse label");
        const auto fine = in.u32(where + " fine label");
        if (fine != kNoFineLabel) r.fine_label = fine;
        std::vector<double> values(payload);
        for (double& v : values) v = in.f64(where + " payload");
        r.views = Matrix(ds.views, ds.dim, std::move(values));
        ds.records.push_back(std::move(r));
    }
    if (!in.at_end()) {
        throw DataError(std::to_string(in.remaining()) + " trailing bytes at byte offset " + std::to_string(in.offset()));
    }
    ds.validate();
    return ds;
}

void save_dataset(const FeatureDataset& ds, const std::filesystem::path& path) {
    io::write_file(path, encode_dataset(ds));
}

FeatureDataset load_dataset(const std::filesystem::path& path) {
    const std::string bytes = io::read_file(path);
    try {
        return decode_dataset(bytes);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

DatasetSplit split(const FeatureDataset& ds, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("split: train fraction must lie in (0, 1)");
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const auto c = ds.records[i].coarse_label;
        if (c >= by_class.size()) by_class.resize(c + 1);
        by_class[c].push_back(i);
    }
    DatasetSplit out{empty_like(ds), empty_like(ds), {}};
    std::vector<bool> to_train(ds.records.size(), false);
    std::mt19937_64 rng(seed);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& members = by_class[c];
        if (members.empty()) continue;
        if (members.size() < 2) {
            out.warnings.push_back("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                                   " sample(s); kept in train");
            for (auto i : members) to_train[i] = true;
            continue;
        }
        std::shuffle(members.begin(), members.end(), rng);
        auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
        n_train = std::clamp<std::size_t>(n_train, 1, members.size() - 1);
        for (std::size_t k = 0; k < n_train; ++k) to_train[members[k]] = true;
    }
    for (std::size_t i = 0; i < ds.records.size(); ++i)
        (to_train[i] ? out.train : out.test).records.push_back(ds.records[i]);
    return out;
}

} // namespace hrge
