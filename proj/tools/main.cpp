#include "liftcore/cli.hpp"

int main(int argc, char** argv) { return liftcore::cli::run(argc, argv); }
