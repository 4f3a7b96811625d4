#include "carr/cli.hpp"

int main(int argc, char** argv) { return carr::cli::run(argc, argv); }
