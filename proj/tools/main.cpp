#include "blueprint/cli.hpp"

int main(int argc, char** argv) { return blueprint::cli::run(argc, argv); }
