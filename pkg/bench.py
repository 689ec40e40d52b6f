import timeit

from lib.channels import ChannelFamily
from lib.de import DegreeDistribution, de_step


def bench(ddp: DegreeDistribution, channel, a) -> None:
    de_step(ddp, channel, a)


if __name__ == "__main__":
    ddp = DegreeDistribution.regular(3, 6)
    family = ChannelFamily(ChannelFamily.Kind.BAWGN)
    channel = family.density(0.45)
    execution_time = timeit.timeit(lambda: bench(ddp, channel, channel), number=20)
    print(f"Execution time: {execution_time:.2f} seconds")
