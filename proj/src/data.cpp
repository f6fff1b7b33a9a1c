#include "scribreg/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <queue>
#include <random>
#include <sstream>

namespace scribreg {

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi)
{
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

struct Box {
    int top, left, bottom, right;  // inclusive

    bool overlaps(const Box& o, int gap) const
    {
        return !(right + gap < o.left || o.right + gap < left || bottom + gap < o.top || o.bottom + gap < top);
    }
};

Box bounds(const ShapeSpec& s)
{
    if (s.kind == ShapeKind::Disk)
        return {s.cy - s.radius, s.cx - s.radius, s.cy + s.radius, s.cx + s.radius};
    return {s.top, s.left, s.top + s.height - 1, s.left + s.width - 1};
}

bool inside(const Box& b, const GridShape& size)
{
    return b.top >= 0 && b.left >= 0 && b.bottom < size.h && b.right < size.w;
}

Rgb jitter(const Rgb& c, double amount, std::mt19937_64& rng)
{
    Rgb out{};
    for (int k = 0; k < 3; ++k)
        out[k] = std::clamp(c[k] + uniform(rng, -amount, amount), 0.0, 1.0);
    return out;
}

constexpr double kColorJitter = 0.1;
constexpr int kPlacementRetries = 200;

}  // namespace

bool ShapeSpec::contains(int y, int x) const
{
    if (kind == ShapeKind::Disk) {
        const int dy = y - cy;
        const int dx = x - cx;
        return dy * dy + dx * dx <= radius * radius;
    }
    return y >= top && y < top + height && x >= left && x < left + width;
}

void SceneSpec::validate() const
{
    if (classes < 2 || classes >= kIgnore)
        throw UsageError("scene needs between 2 and 254 classes");
    for (const auto& s : shapes) {
        if (s.label < 1 || s.label >= classes)
            throw UsageError("shape label must be a foreground class");
        if (s.kind == ShapeKind::Rectangle && (s.height < 1 || s.width < 1))
            throw UsageError("rectangle must be at least 1x1");
        if (s.kind == ShapeKind::Disk && s.radius < 0)
            throw UsageError("disk radius must be non-negative");
        if (!inside(bounds(s), size))
            throw UsageError("shape extends outside the image");
    }
    if (ambiguous) {
        const auto [a, b] = ambiguous_pair;
        const int n = static_cast<int>(shapes.size());
        if (a < 0 || b < 0 || a >= n || b >= n || a == b)
            throw UsageError("ambiguous scene needs a valid shape pair");
    }
}

ClassAppearance class_appearance(int label)
{
    static const std::array<ClassAppearance, 5> palette{{
        {{0.45, 0.45, 0.50}, 0.04},  // background
        {{0.85, 0.30, 0.25}, 0.04},
        {{0.30, 0.75, 0.30}, 0.08},
        {{0.30, 0.35, 0.85}, 0.04},
        {{0.85, 0.80, 0.30}, 0.08},
    }};
    if (label >= 0 && label < static_cast<int>(palette.size()))
        return palette[label];
    // Further classes walk the hue circle.
    const double hue = std::fmod(label * 0.618033988749895, 1.0) * 2.0 * std::numbers::pi;
    return {{0.55 + 0.3 * std::cos(hue), 0.55 + 0.3 * std::cos(hue - 2.094), 0.55 + 0.3 * std::cos(hue + 2.094)},
            label % 2 == 0 ? 0.14 : 0.04};
}

SceneSpec sample_scene_spec(const SceneLayout& layout, std::uint64_t seed)
{
    if (layout.classes < 2 || layout.classes >= kIgnore)
        throw UsageError("scene needs between 2 and 254 classes");
    if (layout.min_shapes < 0 || layout.max_shapes < layout.min_shapes)
        throw UsageError("invalid shape count range");
    if (!(layout.min_extent > 0.0) || layout.max_extent < layout.min_extent || layout.max_extent > 1.0)
        throw UsageError("invalid shape extent range");
    if (layout.ambiguous && layout.classes < 3)
        throw UsageError("ambiguous scenes need at least two foreground classes");

    std::mt19937_64 rng(splitmix64(seed));
    SceneSpec spec;
    spec.size = layout.size;
    spec.classes = layout.classes;
    spec.seed = splitmix64(seed ^ 0x5ca1ab1eULL);
    const auto bg = class_appearance(0);
    spec.background_color = jitter(bg.color, kColorJitter, rng);
    spec.background_noise = bg.noise;

    const int extent = std::min(layout.size.h, layout.size.w);
    const int min_side = std::max(1, static_cast<int>(layout.min_extent * extent));
    const int max_side = std::max(min_side, static_cast<int>(layout.max_extent * extent));
    const int min_radius = std::max(1, min_side / 2);
    const int max_radius = std::max(min_radius, max_side / 2);

    std::vector<Box> placed;
    const auto try_place = [&](auto&& make) -> bool {
        for (int attempt = 0; attempt < kPlacementRetries; ++attempt) {
            const auto shapes = make();
            bool ok = true;
            for (const auto& s : shapes) {
                const Box b = bounds(s);
                if (!inside(b, layout.size))
                    ok = false;
                for (const auto& other : placed)
                    if (b.overlaps(other, 2))
                        ok = false;
            }
            if (!ok)
                continue;
            for (const auto& s : shapes) {
                placed.push_back(bounds(s));
                spec.shapes.push_back(s);
            }
            return true;
        }
        return false;
    };

    const auto random_label = [&] { return uniform_int(rng, 1, layout.classes - 1); };
    const auto random_rect = [&](int label, const Rgb& color, double noise) {
        ShapeSpec s;
        s.kind = ShapeKind::Rectangle;
        s.label = label;
        s.height = uniform_int(rng, min_side, max_side);
        s.width = uniform_int(rng, min_side, max_side);
        s.top = uniform_int(rng, 0, std::max(0, layout.size.h - s.height));
        s.left = uniform_int(rng, 0, std::max(0, layout.size.w - s.width));
        s.color = color;
        s.noise = noise;
        return s;
    };

    if (layout.ambiguous) {
        // Two rectangles sharing a vertical edge: same fill colour, different class and texture.
        const int a = random_label();
        int b = random_label();
        while (b == a || (layout.classes > 3 && class_appearance(b).noise == class_appearance(a).noise))
            b = random_label();
        const Rgb color = jitter(class_appearance(a).color, kColorJitter, rng);
        const bool ok = try_place([&] {
            ShapeSpec first = random_rect(a, color, class_appearance(a).noise);
            ShapeSpec second = random_rect(b, color, class_appearance(b).noise);
            second.left = first.left + first.width;
            const int lo = std::max(0, first.top - second.height + 2);
            const int hi = std::min(layout.size.h - second.height, first.top + first.height - 2);
            second.top = hi >= lo ? uniform_int(rng, lo, hi) : first.top;
            return std::vector<ShapeSpec>{first, second};
        });
        if (!ok)
            throw UsageError("cannot place the ambiguous shape pair in a " + to_string(layout.size) + " image");
        spec.ambiguous = true;
        spec.ambiguous_pair = {0, 1};
    }

    const int count = uniform_int(rng, layout.min_shapes, layout.max_shapes) - (layout.ambiguous ? 2 : 0);
    for (int n = 0; n < count; ++n) {
        const int label = random_label();
        const auto look = class_appearance(label);
        const Rgb color = jitter(look.color, kColorJitter, rng);
        const bool disk = uniform(rng, 0.0, 1.0) < 0.5;
        const bool ok = try_place([&] {
            if (!disk)
                return std::vector<ShapeSpec>{random_rect(label, color, look.noise)};
            ShapeSpec s;
            s.kind = ShapeKind::Disk;
            s.label = label;
            s.radius = uniform_int(rng, min_radius, max_radius);
            s.cy = uniform_int(rng, s.radius, std::max(s.radius, layout.size.h - 1 - s.radius));
            s.cx = uniform_int(rng, s.radius, std::max(s.radius, layout.size.w - 1 - s.radius));
            s.color = color;
            s.noise = look.noise;
            return std::vector<ShapeSpec>{s};
        });
        if (!ok)
            throw UsageError("cannot place " + std::to_string(count) + " shapes in a " + to_string(layout.size) +
                             " image after " + std::to_string(kPlacementRetries) + " retries");
    }
    return spec;
}

RenderedScene generate_scene(const SceneSpec& spec)
{
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    RenderedScene out{GridImage(spec.size, 3), LabelMask(spec.size, 0)};
    for (int y = 0; y < spec.size.h; ++y) {
        for (int x = 0; x < spec.size.w; ++x) {
            const int p = spec.size.index(y, x);
            Rgb color = spec.background_color;
            double noise = spec.background_noise;
            int label = 0;
            for (const auto& s : spec.shapes) {
                if (s.contains(y, x)) {
                    color = s.color;
                    noise = s.noise;
                    label = s.label;
                }
            }
            out.dense[p] = static_cast<std::uint8_t>(label);
            auto rgb = out.image.pixel(p);
            for (int k = 0; k < 3; ++k)
                rgb[k] = std::clamp(color[k] + noise * uniform(rng, -1.0, 1.0), 0.0, 1.0);
        }
    }
    return out;
}

LabelMask generate_scribbles(const LabelMask& dense, const ScribbleSpec& spec)
{
    if (spec.strokes_per_region < 1 || !(spec.length_fraction > 0.0))
        throw UsageError("scribble spec needs >= 1 stroke and a positive length fraction");
    const GridShape shape = dense.shape;
    const int n = static_cast<int>(shape.pixels());
    LabelMask out(shape);

    // 4-connected regions.
    std::vector<int> region(n, -1);
    std::vector<std::vector<int>> members;
    for (int start = 0; start < n; ++start) {
        if (region[start] >= 0 || dense[start] == kIgnore)
            continue;
        const int id = static_cast<int>(members.size());
        members.emplace_back();
        std::queue<int> todo;
        todo.push(start);
        region[start] = id;
        while (!todo.empty()) {
            const int p = todo.front();
            todo.pop();
            members[id].push_back(p);
            const int y = shape.row(p);
            const int x = shape.col(p);
            const std::array<std::array<int, 2>, 4> steps{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
            for (const auto& [dy, dx] : steps) {
                const int yy = y + dy;
                const int xx = x + dx;
                if (yy < 0 || yy >= shape.h || xx < 0 || xx >= shape.w)
                    continue;
                const int q = shape.index(yy, xx);
                if (region[q] < 0 && dense[q] == dense[p]) {
                    region[q] = id;
                    todo.push(q);
                }
            }
        }
    }

    // 1px erosion: all 8 neighbours inside the image and in the same region.
    const auto interior = [&](int p) {
        const int y = shape.row(p);
        const int x = shape.col(p);
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int yy = y + dy;
                const int xx = x + dx;
                if (yy < 0 || yy >= shape.h || xx < 0 || xx >= shape.w || region[shape.index(yy, xx)] != region[p])
                    return false;
            }
        return true;
    };

    for (int id = 0; id < static_cast<int>(members.size()); ++id) {
        const auto& pix = members[id];
        const auto label = dense[pix.front()];
        std::mt19937_64 rng(splitmix64(spec.seed ^ splitmix64(static_cast<std::uint64_t>(id) + 1)));

        std::vector<char> eroded(n, 0);
        std::vector<int> interior_pixels;
        int top = shape.h, bottom = -1, left = shape.w, right = -1;
        double sy = 0.0, sx = 0.0;
        for (int p : pix) {
            top = std::min(top, shape.row(p));
            bottom = std::max(bottom, shape.row(p));
            left = std::min(left, shape.col(p));
            right = std::max(right, shape.col(p));
            sy += shape.row(p);
            sx += shape.col(p);
            if (interior(p)) {
                eroded[p] = 1;
                interior_pixels.push_back(p);
            }
        }

        if (interior_pixels.empty()) {
            // Too thin for a stroke: label the pixel nearest the centroid.
            sy /= static_cast<double>(pix.size());
            sx /= static_cast<double>(pix.size());
            const auto nearest = std::min_element(pix.begin(), pix.end(), [&](int a, int b) {
                const auto dist = [&](int p) { return std::hypot(shape.row(p) - sy, shape.col(p) - sx); };
                return dist(a) < dist(b);
            });
            out[*nearest] = label;
            continue;
        }

        const int extent = std::max(bottom - top + 1, right - left + 1);
        const int target = std::max(1, static_cast<int>(std::lround(spec.length_fraction * extent)));
        for (int stroke = 0; stroke < spec.strokes_per_region; ++stroke) {
            int p = interior_pixels[std::uniform_int_distribution<std::size_t>(0, interior_pixels.size() - 1)(rng)];
            double fy = shape.row(p);
            double fx = shape.col(p);
            double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
            out[p] = label;
            int length = 1;
            for (int step = 0; length < target && step < 4 * target; ++step) {
                bool moved = false;
                for (int attempt = 0; attempt < 8 && !moved; ++attempt) {
                    const double a = attempt == 0 ? angle + uniform(rng, -0.35, 0.35) : uniform(rng, 0.0, 2.0 * std::numbers::pi);
                    const double ny = fy + std::sin(a);
                    const double nx = fx + std::cos(a);
                    const int iy = static_cast<int>(std::lround(ny));
                    const int ix = static_cast<int>(std::lround(nx));
                    if (iy < 0 || iy >= shape.h || ix < 0 || ix >= shape.w || !eroded[shape.index(iy, ix)])
                        continue;
                    fy = ny;
                    fx = nx;
                    angle = a;
                    moved = true;
                    const int q = shape.index(iy, ix);
                    if (out[q] == kIgnore) {
                        out[q] = label;
                        ++length;
                    }
                }
                if (!moved)
                    break;
            }
        }
    }
    return out;
}

double Dataset::annotated_fraction() const
{
    std::size_t labeled = 0;
    std::size_t total = 0;
    for (const auto& s : train) {
        labeled += s.scribbles.labeled_count();
        total += s.scribbles.labels.size();
    }
    return total == 0 ? 0.0 : static_cast<double>(labeled) / static_cast<double>(total);
}

std::uint64_t scene_seed(std::uint64_t base, int stream, int index)
{
    return splitmix64(splitmix64(base) ^ splitmix64((static_cast<std::uint64_t>(stream) << 32) | static_cast<std::uint32_t>(index)));
}

Dataset generate_dataset(const DatasetSpec& spec)
{
    Dataset data;
    data.classes = spec.layout.classes;
    const auto make = [&](int stream, int index, const char* prefix) {
        const auto seed = scene_seed(spec.seed, stream, index);
        const auto scene_spec = sample_scene_spec(spec.layout, seed);
        auto rendered = generate_scene(scene_spec);
        Scene s;
        s.id = std::string(prefix) + std::to_string(index);
        s.scribbles = generate_scribbles(rendered.dense, {1, spec.length_fraction, splitmix64(seed ^ 0x5c81bb1eULL)});
        s.image = std::move(rendered.image);
        s.dense = std::move(rendered.dense);
        s.ambiguous = scene_spec.ambiguous;
        return s;
    };
    for (int k = 0; k < spec.train_scenes; ++k)
        data.train.push_back(make(0, k, "train_"));
    for (int k = 0; k < spec.val_scenes; ++k)
        data.val.push_back(make(1, k, "val_"));
    return data;
}

namespace {

// Reads a binary PNM header ("P5"/"P6", width, height, maxval) and returns the size.
GridShape read_pnm_header(std::istream& is, const std::string& magic, const std::filesystem::path& path)
{
    std::string got;
    is >> got;
    if (got != magic)
        throw IoError(path.string() + ": expected " + magic + " image");
    const auto next_int = [&]() {
        is >> std::ws;
        while (is.peek() == '#') {
            std::string comment;
            std::getline(is, comment);
            is >> std::ws;
        }
        int v = 0;
        if (!(is >> v))
            throw IoError(path.string() + ": malformed header");
        return v;
    };
    const int w = next_int();
    const int h = next_int();
    const int maxval = next_int();
    if (w < 1 || h < 1 || maxval != 255)
        throw IoError(path.string() + ": unsupported dimensions or maxval");
    is.get();  // single whitespace before the raster
    return GridShape(h, w);
}

std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw IoError("cannot write " + path.string());
    return os;
}

std::ifstream open_in(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open " + path.string());
    return is;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const GridImage& image)
{
    if (image.channels() != 3)
        throw UsageError("write_ppm expects an RGB image");
    auto os = open_out(path);
    os << "P6\n" << image.shape().w << " " << image.shape().h << "\n255\n";
    std::vector<unsigned char> raster(image.size());
    for (std::size_t k = 0; k < raster.size(); ++k)
        raster[k] = static_cast<unsigned char>(std::lround(std::clamp(image.values()[k], 0.0, 1.0) * 255.0));
    os.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
    if (!os)
        throw IoError("failed writing " + path.string());
}

GridImage read_ppm(const std::filesystem::path& path)
{
    auto is = open_in(path);
    const GridShape shape = read_pnm_header(is, "P6", path);
    std::vector<unsigned char> raster(shape.pixels() * 3);
    if (!is.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size())))
        throw IoError(path.string() + ": truncated raster");
    GridImage image(shape, 3);
    for (std::size_t k = 0; k < raster.size(); ++k)
        image.values()[k] = raster[k] / 255.0;
    return image;
}

void write_pgm(const std::filesystem::path& path, const LabelMask& mask)
{
    auto os = open_out(path);
    os << "P5\n" << mask.shape.w << " " << mask.shape.h << "\n255\n";
    os.write(reinterpret_cast<const char*>(mask.labels.data()), static_cast<std::streamsize>(mask.labels.size()));
    if (!os)
        throw IoError("failed writing " + path.string());
}

LabelMask read_pgm(const std::filesystem::path& path)
{
    auto is = open_in(path);
    LabelMask mask(read_pnm_header(is, "P5", path));
    if (!is.read(reinterpret_cast<char*>(mask.labels.data()), static_cast<std::streamsize>(mask.labels.size())))
        throw IoError(path.string() + ": truncated raster");
    return mask;
}

// manifest.txt:
//   # scribreg manifest v1
//   classes <C>
//   <id> <train|val> <image.ppm> <dense.pgm> <scribbles.pgm> <ambiguous 0|1>
// Paths are relative to the manifest's directory.
void write_dataset(const std::filesystem::path& dir, const Dataset& data)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
    auto manifest = open_out(dir / "manifest.txt");
    manifest << "# scribreg manifest v1\nclasses " << data.classes << "\n";
    const auto emit = [&](const Scene& s, const char* split) {
        const std::string image = s.id + ".ppm";
        const std::string dense = s.id + "_dense.pgm";
        const std::string scribbles = s.id + "_scribbles.pgm";
        write_ppm(dir / image, s.image);
        write_pgm(dir / dense, s.dense);
        write_pgm(dir / scribbles, s.scribbles);
        manifest << s.id << ' ' << split << ' ' << image << ' ' << dense << ' ' << scribbles << ' ' << (s.ambiguous ? 1 : 0)
                 << '\n';
    };
    for (const auto& s : data.train)
        emit(s, "train");
    for (const auto& s : data.val)
        emit(s, "val");
    if (!manifest)
        throw IoError("failed writing manifest in " + dir.string());
}

Dataset load_dataset(const std::filesystem::path& dir)
{
    auto manifest = open_in(dir / "manifest.txt");
    Dataset data;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        std::istringstream fields(line);
        std::string first;
        fields >> first;
        if (first == "classes") {
            fields >> data.classes;
            continue;
        }
        Scene s;
        s.id = first;
        std::string split, image, dense, scribbles;
        int ambiguous = 0;
        if (!(fields >> split >> image >> dense >> scribbles >> ambiguous) || (split != "train" && split != "val"))
            throw IoError("malformed manifest line: " + line);
        s.image = read_ppm(dir / image);
        s.dense = read_pgm(dir / dense);
        s.scribbles = read_pgm(dir / scribbles);
        s.ambiguous = ambiguous != 0;
        require_same_shape(s.image.shape(), s.dense.shape, "load_dataset");
        require_same_shape(s.image.shape(), s.scribbles.shape, "load_dataset");
        (split == "train" ? data.train : data.val).push_back(std::move(s));
    }
    if (data.classes < 2)
        throw IoError("manifest in " + dir.string() + " lacks a valid class count");
    return data;
}

}  // namespace scribreg
