#include "hrge/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "hrge/binary_io.hpp"
#include "hrge/errors.hpp"

namespace hrge {

namespace {

ParamList all_params(HrgeModel& model, Classifier& clf) {
    ParamList p = model.params();
    const ParamList h = clf.params();
    p.insert(p.end(), h.begin(), h.end());
    return p;
}

} // namespace

std::string encode_checkpoint(HrgeModel& model, Classifier& clf) {
    const auto& g = model.geometry();
    const ParamList params = all_params(model, clf);
    io::ByteWriter w;
    w.bytes(kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(g.views));
    w.u32(static_cast<std::uint32_t>(g.stride));
    w.u32(static_cast<std::uint32_t>(g.depth));
    w.u32(static_cast<std::uint32_t>(g.width));
    w.u32(static_cast<std::uint32_t>(model.variant().variant));
    w.u32(static_cast<std::uint32_t>(g.pair_hidden));
    w.u32(static_cast<std::uint32_t>(g.coarsen_offset));
    w.u32(static_cast<std::uint32_t>(clf.num_classes()));
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        w.u16(static_cast<std::uint16_t>(p.name.size()));
        w.bytes(p.name);
        w.u32(static_cast<std::uint32_t>(p.rows));
        w.u32(static_cast<std::uint32_t>(p.cols));
        for (double v : p.value) w.f64(v);
    }
    return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    io::ByteReader in(bytes);
    if (in.bytes(kCheckpointMagic.size(), "magic") != kCheckpointMagic) {
        throw DataError("bad magic at byte offset 0: expected 'HRGM'");
    }
    const std::size_t version_at = in.offset();
    const auto version = in.u32("version");
    if (version != kCheckpointVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version) + " at byte offset " +
                        std::to_string(version_at));
    }
    ModelGeometry g;
    g.views = in.u32("N");
    g.stride = in.u32("stride");
    g.depth = in.u32("depth");
    g.width = in.u32("width");
    const std::size_t tag_at = in.offset();
    const auto tag = in.u32("variant tag");
    if (tag > static_cast<std::uint32_t>(Variant::id)) {
        throw DataError("unknown variant tag " + std::to_string(tag) + " at byte offset " + std::to_string(tag_at));
    }
    g.pair_hidden = in.u32("pair hidden width");
    g.coarsen_offset = in.u32("coarsen offset");
    const auto classes = in.u32("num_classes");
    const std::size_t count_at = in.offset();
    const auto count = in.u32("block count");

    Checkpoint ck{[&] {
                      try {
                          return HrgeModel(g, apply_variant(static_cast<Variant>(tag), g.depth));
                      } catch (const ConfigError& e) {
                          throw DataError(std::string("checkpoint header describes an invalid model: ") + e.what());
                      }
                  }(),
                  Classifier()};
    if (classes == 0) throw DataError("checkpoint declares zero classes");
    ck.classifier = Classifier(ck.model.descriptor_length(), classes);
    const ParamList params = all_params(ck.model, ck.classifier);
    if (count != params.size()) {
        throw DataError("checkpoint declares " + std::to_string(count) + " parameter blocks at byte offset " +
                        std::to_string(count_at) + ", model needs " + std::to_string(params.size()));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        const std::string where = "block " + std::to_string(k);
        const std::size_t at = in.offset();
        const auto name_len = in.u16(where + " name length");
        const std::string name = in.bytes(name_len, where + " name");
        const auto rows = in.u32(where + " rows");
        const auto cols = in.u32(where + " cols");
        if (name != params[k].name || rows != params[k].rows || cols != params[k].cols) {
            throw DataError(where + " at byte offset " + std::to_string(at) + " is '" + name + "' " +
                            std::to_string(rows) + "x" + std::to_string(cols) + ", expected '" + params[k].name +
                            "' " + std::to_string(params[k].rows) + "x" + std::to_string(params[k].cols));
        }
        for (double& v : params[k].value) {
            const std::size_t vat = in.offset();
            v = in.f64(where + " values");
            if (!std::isfinite(v)) throw DataError(where + ": non-finite value at byte offset " + std::to_string(vat));
        }
    }
    if (!in.at_end()) {
        throw DataError(std::to_string(in.remaining()) + " trailing bytes at byte offset " + std::to_string(in.offset()));
    }
    return ck;
}

std::string render_manifest(HrgeModel& model, Classifier& clf) {
    const auto& g = model.geometry();
    std::ostringstream out;
    out << "format=HRGM version=" << kCheckpointVersion << '\n'
        << "variant=" << model.variant().name() << '\n'
        << "views=" << g.views << " stride=" << g.stride << " depth=" << g.depth << " width=" << g.width
        << " pair_hidden=" << g.hidden() << " coarsen_offset=" << g.coarsen_offset << '\n'
        << "classes=" << clf.num_classes() << " descriptor_length=" << model.descriptor_length() << '\n';
    for (const auto& p : all_params(model, clf)) {
        double sq = 0.0;
        for (double v : p.value) sq += v * v;
        char norm[32];
        std::snprintf(norm, sizeof norm, "%.10g", std::sqrt(sq));
        out << "block " << p.name << ' ' << p.rows << 'x' << p.cols << " l2=" << norm << '\n';
    }
    return out.str();
}

void save_checkpoint(HrgeModel& model, Classifier& clf, const std::filesystem::path& path) {
    io::write_file(path, encode_checkpoint(model, clf));
    io::write_file(path.string() + ".manifest.txt", render_manifest(model, clf));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string bytes = io::read_file(path);
    try {
        return decode_checkpoint(bytes);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

} // namespace hrge
