#include "selfstorm/io.hpp"

#include <png.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace selfstorm::io {

namespace {

// ---------------------------------------------------------------------------
// TIFF

enum : std::uint16_t {
    kTagWidth = 256,
    kTagLength = 257,
    kTagBitsPerSample = 258,
    kTagCompression = 259,
    kTagPhotometric = 262,
    kTagDescription = 270,
    kTagStripOffsets = 273,
    kTagSamplesPerPixel = 277,
    kTagRowsPerStrip = 278,
    kTagStripByteCounts = 279,
    kTagPlanarConfig = 284,
    kTagSampleFormat = 339,
};

enum : std::uint16_t { kTypeByte = 1, kTypeAscii = 2, kTypeShort = 3, kTypeLong = 4 };

class ByteWriter {
public:
    std::vector<std::uint8_t> bytes;

    void u16(std::uint16_t v) {
        bytes.push_back(static_cast<std::uint8_t>(v & 0xFF));
        bytes.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
    }
    void patch_u32(std::size_t at, std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes[at + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF);
    }
    void align2() {
        if (bytes.size() % 2) bytes.push_back(0);
    }
    std::uint32_t pos() const {
        if (bytes.size() > 0xFFFFFFFFull) throw IoError("TIFF larger than 4 GiB");
        return static_cast<std::uint32_t>(bytes.size());
    }
};

struct IfdEntry {
    std::uint16_t tag, type;
    std::uint32_t count, value;
};

void append_samples(ByteWriter& w, const ImageD& page, SampleType type) {
    for (Eigen::Index r = 0; r < page.rows(); ++r) {
        for (Eigen::Index c = 0; c < page.cols(); ++c) {
            const double v = page(r, c);
            switch (type) {
                case SampleType::u8:
                    w.bytes.push_back(static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0)));
                    break;
                case SampleType::u16:
                    w.u16(static_cast<std::uint16_t>(std::clamp(std::round(v), 0.0, 65535.0)));
                    break;
                case SampleType::f32: {
                    const float f = static_cast<float>(v);
                    std::uint32_t bits;
                    std::memcpy(&bits, &f, 4);
                    w.u32(bits);
                    break;
                }
            }
        }
    }
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

class ByteReader {
public:
    ByteReader(const std::vector<std::uint8_t>& data, bool little) : data_(data), little_(little) {}

    bool in_bounds(std::uint64_t offset, std::uint64_t size) const { return offset + size <= data_.size(); }

    std::uint16_t u16(std::uint64_t at) const {
        check(at, 2);
        const std::uint16_t a = data_[at], b = data_[at + 1];
        return little_ ? static_cast<std::uint16_t>(a | (b << 8)) : static_cast<std::uint16_t>((a << 8) | b);
    }
    std::uint32_t u32(std::uint64_t at) const {
        check(at, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            const std::uint32_t byte = data_[at + static_cast<std::uint64_t>(i)];
            v |= little_ ? byte << (8 * i) : byte << (8 * (3 - i));
        }
        return v;
    }
    std::uint64_t u64(std::uint64_t at) const {
        check(at, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            const std::uint64_t byte = data_[at + static_cast<std::uint64_t>(i)];
            v |= little_ ? byte << (8 * i) : byte << (8 * (7 - i));
        }
        return v;
    }
    std::uint8_t u8(std::uint64_t at) const {
        check(at, 1);
        return data_[at];
    }

private:
    void check(std::uint64_t at, std::uint64_t n) const {
        if (!in_bounds(at, n)) throw FormatError("read past end of file");
    }
    const std::vector<std::uint8_t>& data_;
    bool little_;
};

std::size_t type_size(std::uint16_t type) {
    switch (type) {
        case 1: case 2: case 6: case 7: return 1;
        case 3: case 8: return 2;
        case 4: case 9: case 11: return 4;
        case 5: case 10: case 12: return 8;
        default: return 0;
    }
}

struct RawEntry {
    std::uint16_t type;
    std::uint32_t count;
    std::uint64_t value_at;  // where the value (inline or pointed-to) lives
};

std::vector<std::uint32_t> entry_values(const ByteReader& r, const RawEntry& e) {
    std::vector<std::uint32_t> out;
    out.reserve(e.count);
    for (std::uint32_t i = 0; i < e.count; ++i) {
        switch (e.type) {
            case kTypeByte: out.push_back(r.u8(e.value_at + i)); break;
            case kTypeShort: out.push_back(r.u16(e.value_at + 2ull * i)); break;
            case kTypeLong: out.push_back(r.u32(e.value_at + 4ull * i)); break;
            default: throw FormatError("unsupported integer field type " + std::to_string(e.type));
        }
    }
    return out;
}

}  // namespace

void write_tiff(const fs::path& path, const std::vector<ImageD>& pages, SampleType type,
                const std::string& description) {
    if (pages.empty()) throw IoError("refusing to write an empty TIFF: " + path.string());
    const std::uint16_t bits = type == SampleType::u8 ? 8 : type == SampleType::u16 ? 16 : 32;
    const std::uint16_t format = type == SampleType::f32 ? 3 : 1;

    ByteWriter w;
    w.bytes = {'I', 'I', 42, 0};
    std::size_t next_ptr = w.bytes.size();
    w.u32(0);

    for (std::size_t p = 0; p < pages.size(); ++p) {
        const ImageD& page = pages[p];
        const std::uint32_t data_at = w.pos();
        append_samples(w, page, type);
        const std::uint32_t data_len = w.pos() - data_at;
        w.align2();

        std::uint32_t desc_at = 0;
        std::uint32_t desc_len = 0;
        if (p == 0 && !description.empty()) {
            desc_at = w.pos();
            for (char ch : description) w.bytes.push_back(static_cast<std::uint8_t>(ch));
            w.bytes.push_back(0);
            desc_len = w.pos() - desc_at;
            w.align2();
        }

        std::vector<IfdEntry> entries = {
            {kTagWidth, kTypeLong, 1, static_cast<std::uint32_t>(page.cols())},
            {kTagLength, kTypeLong, 1, static_cast<std::uint32_t>(page.rows())},
            {kTagBitsPerSample, kTypeShort, 1, bits},
            {kTagCompression, kTypeShort, 1, 1},
            {kTagPhotometric, kTypeShort, 1, 1},
        };
        if (desc_len) entries.push_back({kTagDescription, kTypeAscii, desc_len, desc_at});
        entries.push_back({kTagStripOffsets, kTypeLong, 1, data_at});
        entries.push_back({kTagSamplesPerPixel, kTypeShort, 1, 1});
        entries.push_back({kTagRowsPerStrip, kTypeLong, 1, static_cast<std::uint32_t>(page.rows())});
        entries.push_back({kTagStripByteCounts, kTypeLong, 1, data_len});
        entries.push_back({kTagPlanarConfig, kTypeShort, 1, 1});
        entries.push_back({kTagSampleFormat, kTypeShort, 1, format});

        const std::uint32_t ifd_at = w.pos();
        w.patch_u32(next_ptr, ifd_at);
        w.u16(static_cast<std::uint16_t>(entries.size()));
        for (const IfdEntry& e : entries) {
            w.u16(e.tag);
            w.u16(e.type);
            w.u32(e.count);
            if (e.type == kTypeShort && e.count == 1) {
                w.u16(static_cast<std::uint16_t>(e.value));
                w.u16(0);
            } else {
                w.u32(e.value);
            }
        }
        next_ptr = w.bytes.size();
        w.u32(0);
    }
    write_bytes(path, w.bytes);
}

TiffImage read_tiff(const fs::path& path) {
    const std::vector<std::uint8_t> data = read_bytes(path);
    const std::string name = path.string();
    if (data.size() < 8) throw FormatError(name + ": file too short to be a TIFF");
    bool little;
    if (data[0] == 'I' && data[1] == 'I') little = true;
    else if (data[0] == 'M' && data[1] == 'M') little = false;
    else throw FormatError(name + ": not a TIFF (bad byte-order mark)");
    const ByteReader r(data, little);
    if (r.u16(2) != 42) throw FormatError(name + ": not a classic TIFF (magic != 42)");

    TiffImage out;
    std::set<std::uint32_t> seen;
    std::uint32_t ifd = r.u32(4);
    int page = 0;
    while (ifd != 0) {
        ++page;
        const std::string where = name + ": page " + std::to_string(page) + ": ";
        if (!seen.insert(ifd).second) throw FormatError(where + "IFD chain loops");
        if (!r.in_bounds(ifd, 2)) throw FormatError(where + "IFD offset out of bounds");

        std::map<std::uint16_t, RawEntry> tags;
        try {
            const std::uint16_t n = r.u16(ifd);
            if (!r.in_bounds(ifd + 2ull, 12ull * n + 4)) throw FormatError("truncated IFD");
            for (std::uint16_t i = 0; i < n; ++i) {
                const std::uint64_t at = ifd + 2ull + 12ull * i;
                const std::uint16_t tag = r.u16(at);
                const std::uint16_t type = r.u16(at + 2);
                const std::uint32_t count = r.u32(at + 4);
                const std::size_t size = type_size(type) * count;
                const std::uint64_t value_at = size <= 4 ? at + 8 : r.u32(at + 8);
                if (type_size(type) && !r.in_bounds(value_at, size)) throw FormatError("tag " + std::to_string(tag) + " points outside the file");
                tags[tag] = {type, count, value_at};
            }
            const std::uint32_t next = r.u32(ifd + 2ull + 12ull * n);

            auto scalar = [&](std::uint16_t tag, std::optional<std::uint32_t> fallback) -> std::uint32_t {
                const auto it = tags.find(tag);
                if (it == tags.end()) {
                    if (fallback) return *fallback;
                    throw FormatError("missing required tag " + std::to_string(tag));
                }
                const auto v = entry_values(r, it->second);
                if (v.empty()) throw FormatError("empty tag " + std::to_string(tag));
                return v.front();
            };

            const std::uint32_t width = scalar(kTagWidth, std::nullopt);
            const std::uint32_t length = scalar(kTagLength, std::nullopt);
            const std::uint32_t bits = scalar(kTagBitsPerSample, 1);
            const std::uint32_t compression = scalar(kTagCompression, 1);
            const std::uint32_t spp = scalar(kTagSamplesPerPixel, 1);
            const std::uint32_t format = scalar(kTagSampleFormat, 1);
            const std::uint32_t rows_per_strip = scalar(kTagRowsPerStrip, length);
            if (compression != 1) throw FormatError("compressed TIFF is not supported (compression " + std::to_string(compression) + ")");
            if (spp != 1) throw FormatError("only single-channel images are supported");
            if (width == 0 || length == 0) throw FormatError("zero-sized image");
            const bool is_float = format == 3;
            if (!(format == 1 || format == 3)) throw FormatError("unsupported sample format " + std::to_string(format));
            if (is_float ? !(bits == 32 || bits == 64) : !(bits == 8 || bits == 16 || bits == 32))
                throw FormatError("unsupported bits per sample " + std::to_string(bits));
            if (!tags.count(kTagStripOffsets) || !tags.count(kTagStripByteCounts))
                throw FormatError("missing strip layout");
            const auto offsets = entry_values(r, tags.at(kTagStripOffsets));
            const auto counts = entry_values(r, tags.at(kTagStripByteCounts));
            const std::uint32_t rps = std::max<std::uint32_t>(1, std::min(rows_per_strip, length));
            const std::size_t strips = (length + rps - 1) / rps;
            if (offsets.size() < strips || counts.size() < strips) throw FormatError("strip table too short");

            const std::size_t bps = bits / 8;
            ImageD img(length, width);
            for (std::uint32_t row = 0; row < length; ++row) {
                const std::size_t strip = row / rps;
                const std::uint64_t row_at = offsets[strip] + static_cast<std::uint64_t>(row % rps) * width * bps;
                if (static_cast<std::uint64_t>(row % rps + 1) * width * bps > counts[strip] ||
                    !r.in_bounds(row_at, static_cast<std::uint64_t>(width) * bps))
                    throw FormatError("pixel data truncated or out of bounds");
                for (std::uint32_t col = 0; col < width; ++col) {
                    const std::uint64_t at = row_at + static_cast<std::uint64_t>(col) * bps;
                    double v;
                    if (is_float && bits == 32) {
                        const std::uint32_t b = r.u32(at);
                        float f;
                        std::memcpy(&f, &b, 4);
                        v = f;
                    } else if (is_float) {
                        const std::uint64_t b = r.u64(at);
                        std::memcpy(&v, &b, 8);
                    } else if (bits == 8) {
                        v = r.u8(at);
                    } else if (bits == 16) {
                        v = r.u16(at);
                    } else {
                        v = r.u32(at);
                    }
                    img(row, col) = v;
                }
            }
            if (page == 1 && tags.count(kTagDescription)) {
                const RawEntry& e = tags.at(kTagDescription);
                std::string d;
                for (std::uint32_t i = 0; i < e.count; ++i) {
                    const char ch = static_cast<char>(r.u8(e.value_at + i));
                    if (ch == '\0') break;
                    d.push_back(ch);
                }
                out.description = d;
            }
            out.pages.push_back(std::move(img));
            ifd = next;
        } catch (const FormatError& e) {
            const std::string msg = e.what();
            if (msg.rfind(name, 0) == 0) throw;
            throw FormatError(where + msg);
        }
    }
    if (out.pages.empty()) throw FormatError(name + ": TIFF has no pages");
    return out;
}

void write_stack_tiff(const fs::path& path, const FrameStack& stack) {
    std::vector<ImageD> pages;
    pages.reserve(stack.count());
    for (const Frame& f : stack.frames()) pages.push_back(f.pixels());
    std::ostringstream desc;
    desc << "pixel_size_nm=" << format_hex(stack.pixel_size_nm()) << "; " << stack.metadata();
    write_tiff(path, pages, SampleType::u16, desc.str());
}

namespace {
double pixel_size_from_description(const std::string& d, double fallback) {
    const std::string key = "pixel_size_nm=";
    const auto at = d.find(key);
    if (at == std::string::npos) return fallback;
    const auto end = d.find(';', at);
    try {
        const double v = parse_double(d.substr(at + key.size(), end == std::string::npos ? std::string::npos : end - at - key.size()));
        return v > 0 ? v : fallback;
    } catch (const std::exception&) {
        return fallback;
    }
}
}  // namespace

FrameStack read_stack_tiff(const fs::path& path, double pixel_size_nm) {
    TiffImage tiff = read_tiff(path);
    const double px = pixel_size_from_description(tiff.description, pixel_size_nm);
    std::vector<Frame> frames;
    for (std::size_t i = 0; i < tiff.pages.size(); ++i) {
        try {
            frames.emplace_back(std::move(tiff.pages[i]), px);
        } catch (const std::invalid_argument& e) {
            throw FormatError(path.string() + ": page " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    try {
        return FrameStack(std::move(frames), tiff.description);
    } catch (const std::invalid_argument& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_stack_raw(const fs::path& path, const FrameStack& stack) {
    ByteWriter w;
    for (const Frame& f : stack.frames()) {
        const ImageD& img = f.pixels();
        for (Eigen::Index r = 0; r < img.rows(); ++r) {
            for (Eigen::Index c = 0; c < img.cols(); ++c) {
                std::uint64_t bits;
                const double v = img(r, c);
                std::memcpy(&bits, &v, 8);
                w.u32(static_cast<std::uint32_t>(bits & 0xFFFFFFFFu));
                w.u32(static_cast<std::uint32_t>(bits >> 32));
            }
        }
    }
    write_bytes(path, w.bytes);
    std::ostringstream hdr;
    hdr << "format=float64-le\nlayout=row-major\nrows=" << stack.frame_size() << "\ncols=" << stack.frame_size()
        << "\nframes=" << stack.count() << "\npixel_size_nm=" << format_hex(stack.pixel_size_nm())
        << "\nmetadata=" << stack.metadata() << "\n";
    write_text(fs::path(path.string() + ".hdr"), hdr.str());
}

FrameStack read_stack_raw(const fs::path& path) {
    const fs::path hdr_path(path.string() + ".hdr");
    std::istringstream hdr(read_text(hdr_path));
    std::map<std::string, std::string> kv;
    for (std::string line; std::getline(hdr, line);) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    for (const char* key : {"format", "rows", "cols", "frames", "pixel_size_nm"})
        if (!kv.count(key)) throw FormatError(hdr_path.string() + ": missing key '" + key + "'");
    if (kv["format"] != "float64-le") throw FormatError(hdr_path.string() + ": unsupported format " + kv["format"]);
    const long rows = std::stol(kv["rows"]);
    const long cols = std::stol(kv["cols"]);
    const long frames = std::stol(kv["frames"]);
    const double px = parse_double(kv["pixel_size_nm"]);
    const auto data = read_bytes(path);
    if (rows <= 0 || cols <= 0 || frames <= 0 ||
        data.size() != static_cast<std::size_t>(rows * cols * frames) * 8)
        throw FormatError(path.string() + ": size does not match header");
    const ByteReader r(data, true);
    std::vector<Frame> out;
    std::uint64_t at = 0;
    for (long f = 0; f < frames; ++f) {
        ImageD img(rows, cols);
        for (long row = 0; row < rows; ++row) {
            for (long col = 0; col < cols; ++col) {
                const std::uint64_t bits = r.u64(at);
                at += 8;
                double v;
                std::memcpy(&v, &bits, 8);
                img(row, col) = v;
            }
        }
        out.emplace_back(std::move(img), px);
    }
    return FrameStack(std::move(out), kv.count("metadata") ? kv["metadata"] : std::string{});
}

FrameStack read_stack(const fs::path& path, double pixel_size_nm) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".raw") return read_stack_raw(path);
    return read_stack_tiff(path, pixel_size_nm);
}

void write_binary_tiff(const fs::path& path, const BinaryImage& image) {
    write_tiff(path, {image.pixels().cast<double>()}, SampleType::u8, "binary support");
}

BinaryImage read_binary_tiff(const fs::path& path) {
    const TiffImage t = read_tiff(path);
    const ImageD& img = t.pages.front();
    return BinaryImage((img.array() > 0.0).cast<std::uint8_t>());
}

void write_float_tiff(const fs::path& path, const ImageD& image) {
    write_tiff(path, {image}, SampleType::f32);
}

void write_png_preview(const fs::path& path, const ImageD& image) {
    const double lo = image.minCoeff();
    const double hi = image.maxCoeff();
    const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    std::vector<png_byte> buffer(static_cast<std::size_t>(image.size()));
    for (Eigen::Index r = 0; r < image.rows(); ++r)
        for (Eigen::Index c = 0; c < image.cols(); ++c)
            buffer[static_cast<std::size_t>(r * image.cols() + c)] =
                static_cast<png_byte>(std::lround((image(r, c) - lo) * scale));

    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.cols());
    png.height = static_cast<png_uint_32>(image.rows());
    png.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&png, path.string().c_str(), 0, buffer.data(),
                                 static_cast<png_int_32>(image.cols()), nullptr))
        throw IoError("cannot write PNG '" + path.string() + "': " + png.message);
}

void write_ground_truth_csv(const fs::path& path, const GroundTruth& truth) {
    std::ostringstream out;
    out.precision(17);
    out << "frame_id,x_nm,y_nm,photons\n";
    for (std::size_t f = 0; f < truth.active.size(); ++f) {
        for (int k : truth.active[f]) {
            const Emitter& e = truth.emitters.at(static_cast<std::size_t>(k));
            out << f << ',' << e.x_nm << ',' << e.y_nm << ',' << e.photons << '\n';
        }
    }
    write_text(path, out.str());
}

std::string format_hex(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

double parse_double(const std::string& s) {
    const char* begin = s.c_str();
    while (*begin == ' ' || *begin == '\t') ++begin;
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    if (end == begin) throw FormatError("not a number: '" + s + "'");
    while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
    if (*end != '\0') throw FormatError("trailing characters in number: '" + s + "'");
    return v;
}

namespace {
constexpr const char* kCheckpointMagic = "selfstorm-checkpoint";
constexpr int kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const fs::path& path, const ModelParams& params) {
    std::ostringstream out;
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    out << "config kernel_size " << params.config.kernel_size << '\n';
    out << "config scale_factor " << params.config.scale_factor << '\n';
    out << "config init_sigma " << format_hex(params.config.init_sigma) << '\n';
    out << "config init_alpha0 " << format_hex(params.config.init_activation.alpha0) << '\n';
    out << "config init_beta0 " << format_hex(params.config.init_activation.beta0) << '\n';
    const auto kernels = params.kernels();
    for (std::size_t i = 0; i < kKernelCount; ++i) {
        const ImageD& k = *kernels[i];
        out << "tensor " << kKernelNames[i] << ' ' << k.rows() << ' ' << k.cols() << '\n';
        for (Eigen::Index r = 0; r < k.rows(); ++r) {
            for (Eigen::Index c = 0; c < k.cols(); ++c) out << (c ? " " : "") << format_hex(k(r, c));
            out << '\n';
        }
    }
    const auto acts = params.activations();
    for (std::size_t i = 0; i < kActivationCount; ++i) {
        out << "scalar " << kActivationNames[i] << ".alpha0 " << format_hex(acts[i]->alpha0) << '\n';
        out << "scalar " << kActivationNames[i] << ".beta0 " << format_hex(acts[i]->beta0) << '\n';
    }
    out << "end\n";
    write_text(path, out.str());
}

ModelParams load_checkpoint(const fs::path& path) {
    std::istringstream in(read_text(path));
    const std::string where = path.string() + ": ";
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != kCheckpointMagic)
        throw FormatError(where + "not a selfstorm checkpoint");
    if (version != kCheckpointVersion)
        throw FormatError(where + "unsupported checkpoint version " + std::to_string(version));

    ModelParams p;
    std::map<std::string, ImageD> tensors;
    std::map<std::string, double> scalars;
    bool ended = false;
    for (std::string kind; in >> kind;) {
        if (kind == "end") {
            ended = true;
            break;
        }
        std::string name;
        if (!(in >> name)) throw FormatError(where + "truncated record");
        if (kind == "config") {
            std::string value;
            in >> value;
            if (name == "kernel_size") p.config.kernel_size = std::stoi(value);
            else if (name == "scale_factor") p.config.scale_factor = std::stoi(value);
            else if (name == "init_sigma") p.config.init_sigma = parse_double(value);
            else if (name == "init_alpha0") p.config.init_activation.alpha0 = parse_double(value);
            else if (name == "init_beta0") p.config.init_activation.beta0 = parse_double(value);
            else throw FormatError(where + "unknown config key '" + name + "'");
        } else if (kind == "tensor") {
            Eigen::Index rows = 0, cols = 0;
            if (!(in >> rows >> cols) || rows <= 0 || cols <= 0) throw FormatError(where + "bad shape for " + name);
            ImageD t(rows, cols);
            for (Eigen::Index r = 0; r < rows; ++r) {
                for (Eigen::Index c = 0; c < cols; ++c) {
                    std::string tok;
                    if (!(in >> tok)) throw FormatError(where + "truncated tensor " + name);
                    t(r, c) = parse_double(tok);
                }
            }
            tensors[name] = std::move(t);
        } else if (kind == "scalar") {
            std::string tok;
            if (!(in >> tok)) throw FormatError(where + "truncated scalar " + name);
            scalars[name] = parse_double(tok);
        } else {
            throw FormatError(where + "unknown record '" + kind + "'");
        }
    }
    if (!ended) throw FormatError(where + "missing end marker");

    const auto kernels = p.kernels();
    for (std::size_t i = 0; i < kKernelCount; ++i) {
        const std::string name(kKernelNames[i]);
        if (!tensors.count(name)) throw FormatError(where + "missing tensor " + name);
        ImageD& t = tensors[name];
        if (t.rows() != p.config.kernel_size || t.cols() != p.config.kernel_size)
            throw FormatError(where + "tensor " + name + " does not match kernel_size");
        *kernels[i] = std::move(t);
    }
    const auto acts = p.activations();
    for (std::size_t i = 0; i < kActivationCount; ++i) {
        const std::string base(kActivationNames[i]);
        if (!scalars.count(base + ".alpha0") || !scalars.count(base + ".beta0"))
            throw FormatError(where + "missing activation " + base);
        acts[i]->alpha0 = scalars[base + ".alpha0"];
        acts[i]->beta0 = scalars[base + ".beta0"];
    }
    return p;
}

namespace {
std::string format_snr(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}
}  // namespace

void write_eval_report(const fs::path& path, const EvalReport& report, int n_thresholds) {
    std::ostringstream out;
    out << "snr_db=" << format_snr(report.snr_db) << '\n';
    out << "best_threshold=" << format_hex(report.best_threshold) << '\n';
    out << "n_thresholds=" << n_thresholds << '\n';
    write_text(path, out.str());
}

void write_threshold_curve_csv(const fs::path& path, const EvalReport& report) {
    std::ostringstream out;
    out << "threshold,snr_db\n";
    for (const auto& [t, s] : report.threshold_curve) out << format_hex(t) << ',' << format_snr(s) << '\n';
    write_text(path, out.str());
}

void write_training_log(const fs::path& path, const std::vector<EpochRecord>& history) {
    std::ostringstream out;
    for (const EpochRecord& e : history) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "epoch=%d mean_loss=%.10g seconds=%.3f\n", e.epoch, e.mean_loss, e.seconds);
        out << buf;
    }
    write_text(path, out.str());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace selfstorm::io
