import torch
conv = torch.nn.Conv2d(3, 8, kernel_size=(3, 3), stride=1, padding=0)
x = torch.zeros([2, 3, 16, 16], dtype=torch.float64)
print(conv(x.float()).sum())
