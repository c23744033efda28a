#include "ismaf/serialize.hpp"

#include <fmt/format.h>
#include <zlib.h>

#include <bit>
#include <charconv>
#include <fstream>
#include <sstream>

namespace ismaf {

namespace {

constexpr const char* kMagic = "ismaf-model";

std::uint32_t crc_of(std::string_view text)
{
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks so huge files stay correct.
    while (!text.empty()) {
        const auto n = static_cast<uInt>(std::min<std::size_t>(text.size(), 1u << 30));
        crc = crc32(crc, reinterpret_cast<const Bytef*>(text.data()), n);
        text.remove_prefix(n);
    }
    return static_cast<std::uint32_t>(crc);
}

[[noreturn]] void corrupt(const std::string& what)
{
    throw ModelFormatError("model file is corrupt: " + what);
}

template <typename T>
T read(std::istream& in, const char* what)
{
    T v{};
    if (!(in >> v)) corrupt(std::string("cannot read ") + what);
    return v;
}

void expect(std::istream& in, const std::string& word)
{
    const auto got = read<std::string>(in, word.c_str());
    if (got != word) corrupt("expected '" + word + "', found '" + got + "'");
}

double from_bits(const std::string& hex)
{
    std::uint64_t bits = 0;
    const auto [ptr, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), bits, 16);
    if (ec != std::errc() || ptr != hex.data() + hex.size() || hex.size() != 16) corrupt("bad value '" + hex + "'");
    return std::bit_cast<double>(bits);
}

} // namespace

std::string serialize_model(const Model& model)
{
    std::string body = fmt::format("{}\nformat {}\nseed {}\n", kMagic, kModelFormatVersion, model.params.seed());
    body += fmt::format("input {} {} {}\n", model.input.vocab_size, model.input.seq_len, model.input.visual_dim);
    const std::string cfg = config_to_text(model.config);
    body += fmt::format("config {}\n{}", std::count(cfg.begin(), cfg.end(), '\n'), cfg);
    const auto names = model.params.names();
    body += fmt::format("params {}\n", names.size());
    for (const auto& name : names) {
        const Tensor& t = model.params.get(name);
        body += fmt::format("param {} {} {}", name, model.params.trainable(name) ? 1 : 0, t.shape().size());
        for (std::size_t dim : t.shape()) body += fmt::format(" {}", dim);
        body += '\n';
        for (std::size_t i = 0; i < t.numel(); ++i)
            body += fmt::format("{:016x}{}", std::bit_cast<std::uint64_t>(t.data()[i]), i + 1 == t.numel() ? "\n" : " ");
        if (t.numel() == 0) body += '\n';
    }
    return body + fmt::format("checksum {:08x}\n", crc_of(body));
}

Model deserialize_model(const std::string& text)
{
    const auto trailer = text.rfind("checksum ");
    if (text.rfind(kMagic, 0) != 0) corrupt("missing header");
    if (trailer == std::string::npos) corrupt("missing checksum");
    const std::string body = text.substr(0, trailer);
    std::istringstream tail(text.substr(trailer + 9));
    std::uint32_t stored = 0;
    if (!(tail >> std::hex >> stored)) corrupt("unreadable checksum");
    if (stored != crc_of(body)) corrupt("checksum mismatch");

    std::istringstream in(body);
    expect(in, kMagic);
    expect(in, "format");
    const int version = read<int>(in, "format version");
    if (version != kModelFormatVersion)
        throw ModelFormatError(fmt::format("unsupported model format version {} (expected {})", version,
                                           kModelFormatVersion));
    expect(in, "seed");
    const auto seed = read<std::uint64_t>(in, "seed");
    expect(in, "input");
    InputShape input;
    input.vocab_size = read<int>(in, "vocab size");
    input.seq_len = read<std::size_t>(in, "sequence length");
    input.visual_dim = read<std::size_t>(in, "visual width");
    expect(in, "config");
    const auto config_lines = read<std::size_t>(in, "config length");
    std::string line, cfg_text;
    std::getline(in, line);
    for (std::size_t i = 0; i < config_lines; ++i) {
        if (!std::getline(in, line)) corrupt("truncated config");
        cfg_text += line + '\n';
    }
    TrainConfig config = parse_config(cfg_text);
    if (config.seed != seed) corrupt("seed does not match config");

    Model model = init_model(config, input);
    expect(in, "params");
    const auto count = read<std::size_t>(in, "parameter count");
    if (count != model.params.names().size())
        corrupt(fmt::format("{} parameters stored, model has {}", count, model.params.names().size()));
    for (std::size_t p = 0; p < count; ++p) {
        expect(in, "param");
        const auto name = read<std::string>(in, "parameter name");
        if (!model.params.contains(name)) corrupt("unexpected parameter '" + name + "'");
        const bool trainable = read<int>(in, "trainable flag") != 0;
        if (trainable != model.params.trainable(name)) corrupt("trainable flag of '" + name + "' differs");
        Shape shape(read<std::size_t>(in, "rank"));
        for (auto& dim : shape) dim = read<std::size_t>(in, "dimension");
        if (shape != model.params.get(name).shape()) corrupt("shape of '" + name + "' differs");
        Tensor value(shape);
        for (double& v : value.data()) v = from_bits(read<std::string>(in, "value"));
        model.params.set(name, std::move(value));
    }
    return model;
}

void save_model(const Model& model, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write model file " + path.string());
    out << serialize_model(model);
    if (!out) throw std::runtime_error("failed writing model file " + path.string());
}

Model load_model(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return deserialize_model(buf.str());
}

} // namespace ismaf
