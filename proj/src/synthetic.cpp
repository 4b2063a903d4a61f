#include "corefbench/synthetic.hpp"

#include <array>
#include <cstdio>
#include <random>

namespace corefbench {

namespace {

const std::array<const char*, 12> kAnimals = {"dog",  "cat",  "horse", "bird",   "fish", "wolf",
                                              "mouse", "lion", "goat",  "rabbit", "fox",  "deer"};
const std::array<const char*, 12> kObjects = {"table",  "chair",  "stone",  "lamp",
                                              "door",   "wagon",  "bottle", "hammer",
                                              "ladder", "basket", "mirror", "kettle"};
const std::array<const char*, 8> kVerbs = {"pushed",   "watched", "followed", "carried",
                                           "ignored",  "touched", "circled",  "passed"};
const std::array<const char*, 6> kCues = {"alive",    "hungry", "sleepy",
                                          "breathing", "restless", "thirsty"};

std::string make_text(std::size_t frame, const std::string& first, const std::string& second,
                      const std::string& verb, const std::string& cue) {
    switch (frame % 4) {
        case 0: return "the " + first + " " + verb + " the " + second + " because the _ was " +
                       cue + " .";
        case 1: return "the " + first + " " + verb + " the " + second + " and the _ was " + cue +
                       " .";
        case 2: return "yesterday the " + first + " " + verb + " the " + second +
                       " because the _ seemed " + cue + " .";
        default: return "the " + first + " quietly " + verb + " the " + second +
                        " so the _ was " + cue + " .";
    }
}

}  // namespace

std::vector<SchemaInstance> generate_synthetic_schemas(const SyntheticOptions& options) {
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<std::size_t> pick_animal(0, kAnimals.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_object(0, kObjects.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_verb(0, kVerbs.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_cue(0, kCues.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_frame(0, 3);

    std::vector<SchemaInstance> out;
    out.reserve(options.count);
    for (std::size_t i = 0; i < options.count; ++i) {
        const std::string animal = kAnimals[pick_animal(rng)];
        const std::string object = kObjects[pick_object(rng)];
        const std::string verb = kVerbs[pick_verb(rng)];
        const std::string cue = kCues[pick_cue(rng)];
        const std::size_t frame = pick_frame(rng);
        const bool animal_first = i % 2 == 0;

        SchemaInstance inst;
        char id_buf[16];
        std::snprintf(id_buf, sizeof(id_buf), "syn-%04zu", i);
        inst.id = id_buf;
        inst.candidate1 = animal_first ? animal : object;
        inst.candidate2 = animal_first ? object : animal;
        inst.text = make_text(frame, inst.candidate1, inst.candidate2, verb, cue);
        inst.answer = animal_first ? 1 : 2;
        out.push_back(std::move(inst));
    }
    return out;
}

}  // namespace corefbench
