#pragma once

#include "scribreg/field.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace scribreg {

using Rgb = std::array<double, 3>;

enum class ShapeKind { Rectangle, Disk };

// One filled shape. Rectangles span rows [top, top+height) and columns
// [left, left+width); disks are centred at (cy, cx) with the given radius.
struct ShapeSpec {
    ShapeKind kind = ShapeKind::Rectangle;
    int label = 1;
    int top = 0, left = 0, height = 1, width = 1;  // rectangle
    int cy = 0, cx = 0, radius = 1;                // disk
    Rgb color{0.5, 0.5, 0.5};
    double noise = 0.0;  // per-pixel uniform noise amplitude

    bool contains(int y, int x) const;
};

struct SceneSpec {
    GridShape size{48, 48};
    int classes = 4;
    Rgb background_color{0.5, 0.5, 0.5};
    double background_noise = 0.0;
    std::vector<ShapeSpec> shapes;  // painted in order; later shapes occlude earlier ones
    bool ambiguous = false;         // shapes[ambiguous_pair] touch, share a colour, differ in class
    std::array<int, 2> ambiguous_pair{-1, -1};
    std::uint64_t seed = 0;         // drives per-pixel noise

    void validate() const;
};

struct SceneLayout {
    GridShape size{48, 48};
    int classes = 4;
    int min_shapes = 4;
    int max_shapes = 6;
    // Rectangle sides and disk diameters as fractions of the shorter image side.
    double min_extent = 0.15;
    double max_extent = 0.3;
    bool ambiguous = false;
};

// Per-class appearance: mean colour and texture (noise amplitude). Class 0 is background.
struct ClassAppearance {
    Rgb color;
    double noise;
};
ClassAppearance class_appearance(int label);

// Draws a random scene layout. Throws UsageError if the shapes cannot be
// placed within a bounded number of retries.
SceneSpec sample_scene_spec(const SceneLayout& layout, std::uint64_t seed);

struct RenderedScene {
    GridImage image;
    LabelMask dense;
};

RenderedScene generate_scene(const SceneSpec& spec);

struct ScribbleSpec {
    int strokes_per_region = 1;
    double length_fraction = 0.6;  // stroke length relative to the region's bounding-box extent
    std::uint64_t seed = 0;
};

// One or more random-walk strokes inside the 1px erosion of every connected
// region of `dense`. Regions with an empty erosion get a single labelled pixel.
LabelMask generate_scribbles(const LabelMask& dense, const ScribbleSpec& spec);

struct Scene {
    std::string id;
    GridImage image;
    LabelMask dense;
    LabelMask scribbles;
    bool ambiguous = false;
};

struct DatasetSpec {
    SceneLayout layout;
    int train_scenes = 200;
    int val_scenes = 50;
    double length_fraction = 0.6;
    std::uint64_t seed = 1;
};

struct Dataset {
    int classes = 0;
    std::vector<Scene> train;
    std::vector<Scene> val;

    double annotated_fraction() const;
};

// Train scene k uses the k-th derived seed of stream 0, val scenes stream 1,
// so the splits never share a seed.
std::uint64_t scene_seed(std::uint64_t base, int stream, int index);

Dataset generate_dataset(const DatasetSpec& spec);

// Binary P6 (RGB) and P5 (grey) portable any-maps, 8-bit.
void write_ppm(const std::filesystem::path& path, const GridImage& image);
GridImage read_ppm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const LabelMask& mask);
LabelMask read_pgm(const std::filesystem::path& path);

// Writes images, masks and manifest.txt under `dir`.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace scribreg
